#include <gtest/gtest.h>

#include <charconv>

#include "cyclife/csv.hpp"
#include "support/builders.hpp"

using namespace cyclife;
using testing_support::TempDir;

TEST(Csv, FormatDoubleRoundTripsExactly) {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-7, 1234567.890123, 0.0, 5e-324}) {
    const std::string s = csv::format_double(v);
    double back = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    EXPECT_EQ(back, v) << s;
  }
  EXPECT_EQ(csv::format_double(0.5), "0.5");
}

TEST(Csv, SplitKeepsEmptyFields) {
  const auto f = csv::split("a,,b,");
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[0], "a");
  EXPECT_EQ(f[1], "");
  EXPECT_EQ(f[2], "b");
  EXPECT_EQ(f[3], "");
  EXPECT_EQ(csv::join(f), "a,,b,");
}

TEST(Csv, ReadTableHandlesBomAndCrlf) {
  TempDir dir;
  const auto path = dir.path() / "t.csv";
  csv::write_text(path, "\xEF\xBB\xBFx,y\r\n1,2.5\r\n\r\n3,4\r\n");
  const auto t = csv::read_table(path, {"x", "y"});
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.integer(1, 0), 3);
  EXPECT_DOUBLE_EQ(t.number(0, 1), 2.5);
}

TEST(Csv, SchemaErrorsCarryCode) {
  TempDir dir;
  const auto path = dir.path() / "t.csv";
  csv::write_text(path, "x,y\n1\n");
  try {
    csv::read_table(path);
    FAIL() << "expected a schema error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::schema);
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }

  csv::write_text(path, "x,y\n1,nan\n");
  const auto t = csv::read_table(path);
  EXPECT_THROW(t.number(0, 1), Error);
  EXPECT_THROW(csv::read_table(path, {"x", "z"}), Error);
  EXPECT_THROW(csv::read_table(dir.path() / "missing.csv"), Error);
}

TEST(Csv, WriterProducesNewlineTerminatedRows) {
  csv::Writer w({"a", "b"});
  w.row({"1", "2"});
  EXPECT_EQ(w.str(), "a,b\n1,2\n");
}
