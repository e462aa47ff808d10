#pragma once

#include <string>
#include <vector>

#include "rosetta/common.hpp"

namespace rosetta::svg {

// One named curve; y must be the same length as the shared x grid.
struct Series {
  std::string name;
  std::vector<double> y;
};

// Round tick positions covering [lo, hi]: multiples of 1, 2 or 5 times a
// power of ten, chosen so roughly `target` ticks span the range.
// Requires lo < hi and a target of at least 2.
std::vector<double> nice_ticks(double lo, double hi, int target = 6);

// Writes a self-contained line chart. The canvas size, margins and palette
// are fixed so the output is byte-for-byte reproducible. Throws InputError
// for empty or mismatched data and IoError when the file cannot be written.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<double>& x,
                      const std::vector<Series>& series);

}  // namespace rosetta::svg
