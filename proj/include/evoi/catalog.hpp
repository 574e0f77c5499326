#pragma once

// The feasible item set and the exact inner-product retrieval primitives.
//
// Every query strategy ends up scanning the catalog with one or more
// direction vectors (posterior means, per-response means, particles).
// Retrieval is exact: a blocked GEMM over the row-major item matrix followed
// by a per-direction bounded selection. Ties on score always resolve to the
// smallest item index.

#include "evoi/common.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string_view>
#include <unordered_map>
#include <unordered_set>

namespace evoi {

struct ScoredItem {
  Index index = 0;
  double score = 0.0;
  friend bool operator==(const ScoredItem&, const ScoredItem&) = default;
};

// Order used by every ranking in the library: score descending, index ascending.
inline bool ranks_before(const ScoredItem& a, const ScoredItem& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

class Catalog {
 public:
  Catalog() = default;

  // `ids`, `names` may be empty (implicit ids "0".."N-1", no names).
  // `attribute_names` may be empty (implicit "a0".."a{d-1}").
  explicit Catalog(Matrix items, std::vector<std::string> ids = {}, std::vector<std::string> names = {},
                   std::vector<std::string> attribute_names = {})
      : items_(std::move(items)),
        ids_(std::move(ids)),
        names_(std::move(names)),
        attribute_names_(std::move(attribute_names)) {
    if (items_.rows() < 1 || items_.cols() < 1) throw InvalidArgument("catalog needs at least one item and one attribute");
    if (!items_.allFinite()) throw InvalidArgument("catalog contains non-finite attribute values");
    if (!ids_.empty() && ids_.size() != size()) throw InvalidArgument("catalog id count does not match item count");
    if (!names_.empty() && names_.size() != size()) throw InvalidArgument("catalog name count does not match item count");
    if (!attribute_names_.empty() && attribute_names_.size() != dim())
      throw InvalidArgument("catalog attribute-name count does not match dimension");
    if (!ids_.empty()) {
      std::unordered_set<std::string_view> seen;
      seen.reserve(ids_.size());
      for (const auto& id : ids_)
        if (!seen.insert(id).second) throw InvalidArgument("duplicate item id '" + id + "'");
    }
    max_norm_ = items_.rowwise().norm().maxCoeff();
  }

  Index size() const { return static_cast<Index>(items_.rows()); }
  Index dim() const { return static_cast<Index>(items_.cols()); }
  const Matrix& items() const { return items_; }
  auto item(Index i) const { return items_.row(static_cast<Eigen::Index>(i)); }

  std::string id(Index i) const { return ids_.empty() ? std::to_string(i) : ids_[i]; }
  std::string name(Index i) const { return names_.empty() ? std::string() : names_[i]; }
  std::string attribute_name(Index a) const {
    return attribute_names_.empty() ? "a" + std::to_string(a) : attribute_names_[a];
  }
  bool has_explicit_ids() const { return !ids_.empty(); }
  bool has_names() const { return !names_.empty(); }

  // Largest item L2 norm; used as the default norm bound for relaxed slates.
  double max_norm() const { return max_norm_; }

  std::optional<Index> find_id(const std::string& id) const {
    if (ids_.empty()) {
      Index value = 0;
      auto [ptr, ec] = std::from_chars(id.data(), id.data() + id.size(), value);
      if (ec != std::errc() || ptr != id.data() + id.size() || value >= size()) return std::nullopt;
      return value;
    }
    for (Index i = 0; i < ids_.size(); ++i)
      if (ids_[i] == id) return i;
    return std::nullopt;
  }

  // Partial-query mode needs every attribute value in [0,1].
  bool in_unit_cube() const { return items_.minCoeff() >= 0.0 && items_.maxCoeff() <= 1.0; }
  void require_partial_mode() const {
    if (!in_unit_cube()) throw InvalidArgument("partial-query mode requires attribute values in [0,1]");
  }

 private:
  Matrix items_;
  std::vector<std::string> ids_;
  std::vector<std::string> names_;
  std::vector<std::string> attribute_names_;
  double max_norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Synthetic generator

struct SynthSpec {
  Index n_items = 0;
  Index dim = 0;
  std::uint64_t seed = 0;
};

// Items i.i.d. N(0, I) under the seeded RNG.
inline Catalog synth_catalog(const SynthSpec& spec) {
  if (spec.n_items < 1 || spec.dim < 1) throw InvalidArgument("synth_catalog needs n_items >= 1 and dim >= 1");
  Matrix items(static_cast<Eigen::Index>(spec.n_items), static_cast<Eigen::Index>(spec.dim));
  Rng rng = make_rng(spec.seed);
  fill_standard_normal(items, rng);
  return Catalog(std::move(items));
}

// 0/1 attributes, each set with probability `density`. Usable in partial mode.
inline Catalog synth_binary_catalog(const SynthSpec& spec, double density) {
  if (spec.n_items < 1 || spec.dim < 1) throw InvalidArgument("synth_binary_catalog needs n_items >= 1 and dim >= 1");
  if (!(density >= 0.0 && density <= 1.0)) throw InvalidArgument("density must be in [0,1]");
  Matrix items(static_cast<Eigen::Index>(spec.n_items), static_cast<Eigen::Index>(spec.dim));
  Rng rng = make_rng(spec.seed);
  std::bernoulli_distribution bit(density);
  for (Eigen::Index i = 0; i < items.rows(); ++i)
    for (Eigen::Index a = 0; a < items.cols(); ++a) items(i, a) = bit(rng) ? 1.0 : 0.0;
  return Catalog(std::move(items));
}

// ---------------------------------------------------------------------------
// Retrieval

namespace detail {

inline constexpr Eigen::Index kRetrievalBlock = 4096;

// Keeps the best `depth` entries seen so far, in rank order.
class BoundedRanking {
 public:
  explicit BoundedRanking(Index depth) : depth_(depth) { best_.reserve(depth + 1); }

  void offer(Index index, double score) {
    if (best_.size() == depth_) {
      const ScoredItem& worst = best_.back();
      // Items arrive in increasing index order, so equal scores never displace.
      if (!(score > worst.score)) return;
    }
    ScoredItem entry{index, score};
    auto pos = std::upper_bound(best_.begin(), best_.end(), entry, ranks_before);
    best_.insert(pos, entry);
    if (best_.size() > depth_) best_.pop_back();
  }

  std::vector<ScoredItem> take() { return std::move(best_); }

 private:
  Index depth_;
  std::vector<ScoredItem> best_;
};

}  // namespace detail

// Top-`depth` items for each row of `directions`, one memory sweep of the catalog.
inline std::vector<std::vector<ScoredItem>> top_k_multi(const Catalog& catalog, const Matrix& directions, Index depth) {
  if (static_cast<Index>(directions.cols()) != catalog.dim())
    throw InvalidArgument("direction dimension does not match catalog dimension");
  if (depth > catalog.size()) throw InvalidArgument("requested more items than the catalog holds");
  const Eigen::Index n_dirs = directions.rows();
  std::vector<detail::BoundedRanking> rankings(static_cast<std::size_t>(n_dirs), detail::BoundedRanking(depth));
  if (depth > 0) {
    const Matrix& items = catalog.items();
    const Eigen::MatrixXd dir_t = directions.transpose();
    Eigen::MatrixXd scores;
    for (Eigen::Index start = 0; start < items.rows(); start += detail::kRetrievalBlock) {
      const Eigen::Index len = std::min(detail::kRetrievalBlock, items.rows() - start);
      scores.noalias() = items.middleRows(start, len) * dir_t;
      for (Eigen::Index r = 0; r < n_dirs; ++r) {
        auto& ranking = rankings[static_cast<std::size_t>(r)];
        for (Eigen::Index i = 0; i < len; ++i) ranking.offer(static_cast<Index>(start + i), scores(i, r));
      }
    }
  }
  std::vector<std::vector<ScoredItem>> out;
  out.reserve(rankings.size());
  for (auto& r : rankings) out.push_back(r.take());
  return out;
}

// Argmax item for each row of `directions`.
inline std::vector<ScoredItem> argmax_multi(const Catalog& catalog, const Matrix& directions) {
  if (static_cast<Index>(directions.cols()) != catalog.dim())
    throw InvalidArgument("direction dimension does not match catalog dimension");
  const Eigen::Index n_dirs = directions.rows();
  std::vector<ScoredItem> best(static_cast<std::size_t>(n_dirs),
                               ScoredItem{0, -std::numeric_limits<double>::infinity()});
  const Matrix& items = catalog.items();
  const Eigen::MatrixXd dir_t = directions.transpose();
  Eigen::MatrixXd scores;
  for (Eigen::Index start = 0; start < items.rows(); start += detail::kRetrievalBlock) {
    const Eigen::Index len = std::min(detail::kRetrievalBlock, items.rows() - start);
    scores.noalias() = items.middleRows(start, len) * dir_t;
    for (Eigen::Index r = 0; r < n_dirs; ++r) {
      ScoredItem& b = best[static_cast<std::size_t>(r)];
      for (Eigen::Index i = 0; i < len; ++i) {
        if (scores(i, r) > b.score) b = ScoredItem{static_cast<Index>(start + i), scores(i, r)};
      }
    }
  }
  return best;
}

// The k items with the largest x.v, descending, smallest index first on ties.
inline std::vector<ScoredItem> top_k_by_direction(const Catalog& catalog, const Vector& v, Index k) {
  if (k > catalog.size()) throw InvalidArgument("top_k_by_direction: k exceeds catalog size");
  Matrix dir(1, v.size());
  dir.row(0) = v.transpose();
  return std::move(top_k_multi(catalog, dir, k).front());
}

// ---------------------------------------------------------------------------
// CSV and binary interchange

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else {
      field.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line_no);
  fields.push_back(std::move(field));
  return fields;
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline double parse_double(std::string_view text, std::size_t line_no, std::string_view column) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t')) text.remove_suffix(1);
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (text.empty() || ec != std::errc() || ptr != last)
    throw ParseError("non-numeric value '" + std::string(text) + "' in column " + std::string(column), line_no);
  if (!std::isfinite(value))
    throw ParseError("non-finite value in column " + std::string(column), line_no);
  return value;
}

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

}  // namespace detail

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::string> ids;
  std::vector<std::string> names;
  Matrix values;
};

// Parses the `id,name,<attr>...` layout shared by catalogs and empirical priors.
inline CsvTable parse_item_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  std::vector<double> flat;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
      line.erase(0, 3);
    if (line_no == 1) {
      table.header = detail::split_csv_line(line, line_no);
      if (table.header.size() < 3 || table.header[0] != "id" || table.header[1] != "name")
        throw ParseError("header must be id,name,<attribute>...", line_no);
      continue;
    }
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line, line_no);
    if (fields.size() != table.header.size())
      throw ParseError("expected " + std::to_string(table.header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    if (fields[0].empty()) throw ParseError("empty id", line_no);
    table.ids.push_back(fields[0]);
    table.names.push_back(fields[1]);
    for (std::size_t c = 2; c < fields.size(); ++c) flat.push_back(detail::parse_double(fields[c], line_no, table.header[c]));
  }
  if (line_no == 0) throw ParseError("empty file", 1);
  const auto d = static_cast<Eigen::Index>(table.header.size() - 2);
  const auto n = static_cast<Eigen::Index>(table.ids.size());
  if (n == 0) throw ParseError("no data rows", line_no);
  table.values = Eigen::Map<Matrix>(flat.data(), n, d);
  return table;
}

inline CsvTable read_item_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return parse_item_csv(in);
}

inline Catalog catalog_from_csv(std::istream& in) {
  CsvTable t = parse_item_csv(in);
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    auto [it, fresh] = seen.emplace(t.ids[i], i);
    if (!fresh) throw ParseError("duplicate id '" + t.ids[i] + "'", i + 2);
  }
  bool any_name = std::any_of(t.names.begin(), t.names.end(), [](const auto& s) { return !s.empty(); });
  std::vector<std::string> attrs(t.header.begin() + 2, t.header.end());
  return Catalog(std::move(t.values), std::move(t.ids), any_name ? std::move(t.names) : std::vector<std::string>{},
                 std::move(attrs));
}

inline Catalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return catalog_from_csv(in);
}

inline void write_catalog_csv(const Catalog& catalog, std::ostream& out) {
  out << "id,name";
  for (Index a = 0; a < catalog.dim(); ++a) out << ',' << detail::csv_escape(catalog.attribute_name(a));
  out << '\n';
  const Matrix& items = catalog.items();
  for (Index i = 0; i < catalog.size(); ++i) {
    out << detail::csv_escape(catalog.id(i)) << ',' << detail::csv_escape(catalog.name(i));
    for (Index a = 0; a < catalog.dim(); ++a)
      out << ',' << detail::format_double(items(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)));
    out << '\n';
  }
}

inline void save_catalog(const Catalog& catalog, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  write_catalog_csv(catalog, out);
  if (!out) throw Error("write failed for '" + path + "'");
}

// Packed binary matrix: "EVOICAT1", u64 rows, u64 cols, rows*cols f64, all little-endian.
// An optional "EVOIMETA" trailer carries string metadata (ids, names, attribute names).
namespace binary {

inline constexpr char kMagic[8] = {'E', 'V', 'O', 'I', 'C', 'A', 'T', '1'};
inline constexpr char kMetaMagic[8] = {'E', 'V', 'O', 'I', 'M', 'E', 'T', 'A'};

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw Error("truncated binary file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64(std::ostream& out, double d) { put_u64(out, std::bit_cast<std::uint64_t>(d)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  std::uint64_t n = get_u64(in);
  if (n > (1ULL << 32)) throw Error("corrupt string length in binary file");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw Error("truncated binary file");
  return s;
}

inline void write_matrix(std::ostream& out, const Matrix& m) {
  out.write(kMagic, 8);
  put_u64(out, static_cast<std::uint64_t>(m.rows()));
  put_u64(out, static_cast<std::uint64_t>(m.cols()));
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
  }
}

inline Matrix read_matrix(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw Error("not an EVOICAT1 binary file");
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t cols = get_u64(in);
  if (rows == 0 || cols == 0 || rows > (1ULL << 40) / cols) throw Error("corrupt binary header");
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
      throw Error("truncated binary file");
  } else {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = get_f64(in);
  }
  return m;
}

inline void write_strings(std::ostream& out, const std::vector<std::string>& v) {
  put_u64(out, v.size());
  for (const auto& s : v) put_string(out, s);
}

inline std::vector<std::string> read_strings(std::istream& in) {
  std::uint64_t n = get_u64(in);
  if (n > (1ULL << 32)) throw Error("corrupt string table");
  std::vector<std::string> v;
  v.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) v.push_back(get_string(in));
  return v;
}

}  // namespace binary

inline void save_catalog_binary(const Catalog& catalog, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  binary::write_matrix(out, catalog.items());
  out.write(binary::kMetaMagic, 8);
  std::vector<std::string> ids, names, attrs;
  if (catalog.has_explicit_ids())
    for (Index i = 0; i < catalog.size(); ++i) ids.push_back(catalog.id(i));
  if (catalog.has_names())
    for (Index i = 0; i < catalog.size(); ++i) names.push_back(catalog.name(i));
  for (Index a = 0; a < catalog.dim(); ++a) attrs.push_back(catalog.attribute_name(a));
  binary::write_strings(out, ids);
  binary::write_strings(out, names);
  binary::write_strings(out, attrs);
  if (!out) throw Error("write failed for '" + path + "'");
}

inline Catalog load_catalog_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  Matrix items = binary::read_matrix(in);
  char magic[8];
  if (!in.read(magic, 8)) return Catalog(std::move(items));
  if (std::memcmp(magic, binary::kMetaMagic, 8) != 0) throw Error("unexpected trailer in binary catalog");
  auto ids = binary::read_strings(in);
  auto names = binary::read_strings(in);
  auto attrs = binary::read_strings(in);
  return Catalog(std::move(items), std::move(ids), std::move(names), std::move(attrs));
}

// Dispatches on the leading magic bytes.
inline Catalog load_catalog_any(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw Error("cannot open '" + path + "'");
  char magic[8] = {};
  probe.read(magic, 8);
  if (probe.gcount() == 8 && std::memcmp(magic, binary::kMagic, 8) == 0) return load_catalog_binary(path);
  return load_catalog(path);
}

}  // namespace evoi
