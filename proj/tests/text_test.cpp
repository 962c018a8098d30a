#include <gtest/gtest.h>

#include "creole/table.hpp"
#include "creole/text.hpp"

#include <sstream>

using namespace creole;

TEST(Utf8, RoundTripsMixedScripts) {
  const std::string s = "treat him makah lah ẹ̀ 你好 தமிழ்";
  EXPECT_FALSE(text::find_invalid_utf8(s));
  EXPECT_EQ(text::encode_utf8(text::decode_utf8(s)), s);
}

TEST(Utf8, RejectsMalformedSequences) {
  EXPECT_EQ(text::find_invalid_utf8("ab\xC3"), 2u);        // truncated
  EXPECT_EQ(text::find_invalid_utf8("\xC0\xAF"), 0u);      // overlong
  EXPECT_EQ(text::find_invalid_utf8("x\xED\xA0\x80"), 1u); // surrogate
  EXPECT_EQ(text::find_invalid_utf8("\xFF"), 0u);
}

TEST(Lowercase, FoldsLatinLetters) {
  EXPECT_EQ(text::to_lower("Makan LAH"), "makan lah");
  EXPECT_EQ(text::to_lower("ÉCOLE Ẹ Ọ Ṣ Œ"), "école ẹ ọ ṣ œ");
  EXPECT_EQ(text::to_lower("你好"), "你好");
}

TEST(Split, WhitespaceAndSeparators) {
  EXPECT_EQ(text::split_whitespace("  a \t b\n c "), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(text::split("a\t\tb", '\t'), (std::vector<std::string>{"a", "", "b"}));
  EXPECT_EQ(text::trim("  x  "), "x");
  EXPECT_TRUE(text::has_whitespace("two words"));
  EXPECT_FALSE(text::has_whitespace("one"));
}

TEST(Table, AlignsColumnsByCodePoints) {
  Table t;
  t.header = {"language", "PAD"};
  t.add_row({"Kreyòl", "1.47"});
  t.add_row({"en", "1.75"});
  std::ostringstream tsv, txt;
  t.write_tsv(tsv);
  t.write_aligned(txt);
  EXPECT_EQ(tsv.str(), "language\tPAD\nKreyòl\t1.47\nen\t1.75\n");
  EXPECT_EQ(txt.str(), "language  PAD\n--------------\nKreyòl    1.47\nen        1.75\n");
  EXPECT_THROW(t.add_row({"only one"}), std::invalid_argument);
}
