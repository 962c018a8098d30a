#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace creole {

// A rectangular string table rendered as TSV or as aligned text.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row);
  void write_tsv(std::ostream& out) const;
  void write_aligned(std::ostream& out) const;
};

// Fixed-point formatting, e.g. format_fixed(0.5, 4) == "0.5000".
std::string format_fixed(double value, int digits);

}  // namespace creole
