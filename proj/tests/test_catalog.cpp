#include "oracles.hpp"
#include "tmpdir.hpp"

#include <gtest/gtest.h>

using namespace evoi;

TEST(Catalog, ParsesThreeLineFile) {
  TempDir dir;
  auto path = dir.write("c.csv", "id,name,a0,a1\ni1,A,1.0,0.0\ni2,B,0.0,1.0\n");
  Catalog c = load_catalog(path);
  EXPECT_EQ(c.size(), 2u);
  EXPECT_EQ(c.dim(), 2u);
  EXPECT_EQ(c.id(1), "i2");
  EXPECT_EQ(c.name(0), "A");
  EXPECT_EQ(c.attribute_name(1), "a1");
  EXPECT_DOUBLE_EQ(c.items()(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(c.items()(1, 1), 1.0);
  EXPECT_EQ(c.find_id("i2"), Index{1});
  EXPECT_FALSE(c.find_id("nope"));
}

TEST(Catalog, DuplicateIdIsNamed) {
  std::istringstream in("id,name,a0\ni1,A,1\ni1,B,2\n");
  try {
    catalog_from_csv(in);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("i1"), std::string::npos);
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(Catalog, NonNumericCitesLine) {
  std::istringstream in("id,name,a0,a1\ni1,A,1,2\ni2,B,abc,2\n");
  try {
    catalog_from_csv(in);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Catalog, MalformedRowRejected) {
  std::istringstream in("id,name,a0,a1\ni1,A,1\n");
  EXPECT_THROW(catalog_from_csv(in), ParseError);
  std::istringstream bad_header("x,y,a0\n1,2,3\n");
  EXPECT_THROW(catalog_from_csv(bad_header), ParseError);
}

TEST(Catalog, QuotedFieldsAndRoundTrip) {
  TempDir dir;
  auto path = dir.write("c.csv", "id,name,a0,a1\n\"x,1\",\"The \"\"B\"\" side\",0.1,-2.5e-3\ny,,3,4\n");
  Catalog c = load_catalog(path);
  EXPECT_EQ(c.id(0), "x,1");
  EXPECT_EQ(c.name(0), "The \"B\" side");
  save_catalog(c, dir.file("out.csv"));
  Catalog again = load_catalog(dir.file("out.csv"));
  EXPECT_EQ(again.items(), c.items());
  EXPECT_EQ(again.id(0), c.id(0));
  EXPECT_EQ(again.name(0), c.name(0));

  save_catalog_binary(c, dir.file("out.evoicat"));
  Catalog bin = load_catalog_any(dir.file("out.evoicat"));
  EXPECT_EQ(bin.items(), c.items());
  EXPECT_EQ(bin.id(0), "x,1");
  EXPECT_EQ(bin.attribute_name(1), "a1");
}

TEST(Catalog, SynthIsDeterministic) {
  Catalog a = synth_catalog({5000, 10, 42});
  Catalog b = synth_catalog({5000, 10, 42});
  EXPECT_EQ(a.items(), b.items());
  Catalog c = synth_catalog({5000, 10, 43});
  EXPECT_NE(a.items(), c.items());
}

TEST(Catalog, SynthLargeShape) {
  Catalog c = synth_catalog({1'000'000, 50, 7});
  EXPECT_EQ(c.size(), 1'000'000u);
  EXPECT_EQ(c.dim(), 50u);
  EXPECT_TRUE(c.items().allFinite());
}

TEST(Catalog, SynthMoments) {
  Catalog c = synth_catalog({100'000, 10, 3});
  const double n = static_cast<double>(c.items().size());
  const double mean = c.items().sum() / n;
  const double var = (c.items().array() - mean).square().sum() / (n - 1.0);
  EXPECT_NEAR(mean, 0.0, 0.02);
  EXPECT_NEAR(var, 1.0, 0.05);
}

TEST(Catalog, BinarySynthInUnitCube) {
  Catalog c = synth_binary_catalog({200, 6, 1}, 0.3);
  EXPECT_TRUE(c.in_unit_cube());
  EXPECT_NO_THROW(c.require_partial_mode());
  EXPECT_THROW(synth_catalog({10, 3, 1}).require_partial_mode(), InvalidArgument);
}

TEST(TopK, SimpleDirection) {
  Matrix items(2, 2);
  items << 1, 0, 0, 1;
  Catalog c(items);
  auto r = top_k_by_direction(c, Vector::Unit(2, 0), 1);
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].index, 0u);
  EXPECT_DOUBLE_EQ(r[0].score, 1.0);
}

TEST(TopK, ZeroVectorKeepsIndexOrder) {
  Matrix items(2, 2);
  items << 1, 0, 0, 1;
  auto r = top_k_by_direction(Catalog(items), Vector::Zero(2), 2);
  EXPECT_EQ(r[0].index, 0u);
  EXPECT_EQ(r[1].index, 1u);
}

TEST(TopK, MatchesSortOracle) {
  Rng rng = make_rng(11);
  for (int rep = 0; rep < 20; ++rep) {
    Catalog c(oracle::random_matrix(100, 5, rng));
    Vector v = oracle::random_matrix(1, 5, rng).row(0).transpose();
    auto got = top_k_by_direction(c, v, 10);
    auto want = oracle::top_k(c, v, 10);
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(got[i].index, want[i].first);
      EXPECT_NEAR(got[i].score, want[i].second, 1e-12);
    }
  }
}

TEST(TopK, TiesAcrossBlocksPreferSmallerIndex) {
  // Identical items on both sides of the retrieval block boundary.
  Matrix items = Matrix::Zero(9000, 2);
  items.row(8500) << 1, 1;
  items.row(100) << 1, 1;
  items.row(4200) << 1, 1;
  auto r = top_k_by_direction(Catalog(items), Vector::Ones(2), 3);
  EXPECT_EQ(r[0].index, 100u);
  EXPECT_EQ(r[1].index, 4200u);
  EXPECT_EQ(r[2].index, 8500u);
}

TEST(TopK, RejectsTooManyItems) {
  Matrix items(2, 2);
  items << 1, 0, 0, 1;
  EXPECT_THROW(top_k_by_direction(Catalog(items), Vector::Zero(2), 3), InvalidArgument);
}

TEST(Catalog, RejectsNonFinite) {
  Matrix items(1, 2);
  items << 1, std::nan("");
  EXPECT_THROW(Catalog{items}, InvalidArgument);
}
