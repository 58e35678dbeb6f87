#include "diffkpt/plot.hpp"

#include "diffkpt/error.hpp"
#include "diffkpt/io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace diffkpt {

std::vector<double> csv_column(const std::string& csv_text, const std::string& column) {
    std::istringstream is(csv_text);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> headers;
    {
        std::istringstream hs(line);
        std::string cell;
        while (std::getline(hs, cell, ',')) headers.push_back(cell);
    }
    const auto it = std::find(headers.begin(), headers.end(), column);
    if (it == headers.end()) throw FormatError("CSV has no column '" + column + "'");
    const std::size_t want = static_cast<std::size_t>(it - headers.begin());
    std::vector<double> out;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream rs(line);
        std::string cell;
        std::size_t col = 0;
        bool found = false;
        while (std::getline(rs, cell, ',')) {
            if (col++ == want) {
                try {
                    out.push_back(std::stod(cell));
                } catch (const std::exception&) {
                    throw FormatError("CSV line " + std::to_string(lineno) +
                                      " has a non-numeric value '" + cell + "' in column '" +
                                      column + "'");
                }
                found = true;
                break;
            }
        }
        if (!found) throw FormatError("CSV line " + std::to_string(lineno) + " is too short");
    }
    return out;
}

std::string render_line_svg(const std::vector<double>& xs, const std::vector<double>& ys,
                            const std::string& x_label, const std::string& y_label,
                            const std::string& title) {
    if (xs.size() != ys.size()) throw ValidationError("x and y series lengths differ");
    if (xs.empty()) throw ValidationError("cannot plot an empty series");
    const double W = 640, H = 400, ml = 64, mr = 20, mt = 36, mb = 44;
    double xmin = xs[0], xmax = xs[0], ymin = ys[0], ymax = ys[0];
    for (std::size_t i = 1; i < xs.size(); ++i) {
        xmin = std::min(xmin, xs[i]);
        xmax = std::max(xmax, xs[i]);
        ymin = std::min(ymin, ys[i]);
        ymax = std::max(ymax, ys[i]);
    }
    if (xmax == xmin) xmax = xmin + 1.0;
    if (ymax == ymin) ymax = ymin + 1.0;
    const auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    const auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    os << "<text x=\"" << W / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title
       << "</text>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
       << H - mb << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 10
       << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
    os << "<text x=\"16\" y=\"" << (mt + H - mb) / 2
       << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
       << (mt + H - mb) / 2 << ")\">" << y_label << "</text>\n";
    os << "<text x=\"" << ml << "\" y=\"" << H - mb + 16
       << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt_double(xmin) << "</text>\n";
    os << "<text x=\"" << W - mr << "\" y=\"" << H - mb + 16
       << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt_double(xmax) << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << H - mb << "\" text-anchor=\"end\" font-size=\"10\">"
       << fmt_double(ymin) << "</text>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << mt + 4
       << "\" text-anchor=\"end\" font-size=\"10\">" << fmt_double(ymax) << "</text>\n";
    if (xs.size() > 1) {
        os << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (i) os << ' ';
            os << px(xs[i]) << ',' << py(ys[i]);
        }
        os << "\"/>\n";
    }
    for (std::size_t i = 0; i < xs.size(); ++i) {
        os << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i])
           << "\" r=\"2.5\" fill=\"#1f6fb2\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

} // namespace diffkpt
