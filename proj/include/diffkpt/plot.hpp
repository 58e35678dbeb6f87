#pragma once

#include <string>
#include <vector>

namespace diffkpt {

// Standalone SVG line chart; one <circle> per data point.
std::string render_line_svg(const std::vector<double>& xs, const std::vector<double>& ys,
                            const std::string& x_label, const std::string& y_label,
                            const std::string& title);

// Column extraction from a simple header-line CSV (no quoting).
std::vector<double> csv_column(const std::string& csv_text, const std::string& column);

} // namespace diffkpt
