#include <cmath>
#include <cstring>
#include <limits>

#include <gtest/gtest.h>

#include "fusionkit/container.hpp"
#include "fusionkit/error.hpp"
#include "test_util.hpp"

using namespace fusionkit;

TEST(Container, AwkwardDoublesRoundTripBitExactly) {
  const std::vector<double> values{0.1,
                                   -0.0,
                                   1e-310,
                                   std::numeric_limits<double>::min(),
                                   std::numeric_limits<double>::max(),
                                   std::nextafter(1.0, 2.0),
                                   -123456789.123456789,
                                   1.0 / 3.0};
  Container c("blob");
  c.add_tensor("v", Matrix(2, 4, values));
  const Container back = Container::parse(c.serialize());
  const Matrix& m = back.tensor("v");
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double got = m.values()[i];
    EXPECT_EQ(std::memcmp(&got, &values[i], sizeof got), 0) << i;
  }
}

TEST(Container, NestedChildrenMetaAndFile) {
  testutil::TempDir dir;
  Container inner("inner");
  inner.set("note", std::string("two words"));
  inner.add_tensor("t", Matrix{{1, 2}, {3, 4}});
  Container outer("outer");
  outer.set("count", std::size_t{3});
  outer.set("rate", 0.25);
  outer.add_child(inner);
  outer.save(dir / "m.fkc");
  const Container back = Container::load(dir / "m.fkc");
  EXPECT_EQ(back.kind(), "outer");
  EXPECT_EQ(back.get_size("count"), 3u);
  EXPECT_EQ(back.get_double("rate"), 0.25);
  EXPECT_EQ(back.child("inner").get("note"), "two words");
  EXPECT_EQ(back.child("inner").tensor("t"), (Matrix{{1, 2}, {3, 4}}));
  EXPECT_EQ(back.serialize(), outer.serialize());
  EXPECT_EQ(outer.serialize().rfind("FUSIONKIT-CONTAINER 1\n", 0), 0u);
}

TEST(Container, LookupErrors) {
  Container c("x");
  c.set("word", std::string("abc"));
  EXPECT_THROW(c.get("missing"), Error);
  EXPECT_THROW(c.get_double("word"), Error);
  EXPECT_THROW(c.get_size("word"), Error);
  EXPECT_THROW(c.tensor("w"), Error);
  EXPECT_THROW(c.child("y"), Error);
  EXPECT_THROW(c.expect_kind("lstm"), Error);
  EXPECT_FALSE(c.has("missing"));
}

TEST(Container, MalformedTextIsAParseError) {
  EXPECT_THROW(Container::parse("NOT-A-CONTAINER 1\n"), ParseError);
  EXPECT_THROW(Container::parse("FUSIONKIT-CONTAINER 2\nbegin x\nend\n"), ParseError);
  EXPECT_THROW(Container::parse("FUSIONKIT-CONTAINER 1\nbegin x\ntensor t 1 2\n1\nend\n"), ParseError);
  EXPECT_THROW(Container::parse("FUSIONKIT-CONTAINER 1\nbegin x\n"), ParseError);
  try {
    Container::parse("FUSIONKIT-CONTAINER 1\nbegin x\ntensor t 1 1\nabc\nend\n", "model.fkc");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("model.fkc"), std::string::npos);
  }
}
