#include "leakwatch/svg.hpp"

#include "leakwatch/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace leakwatch::svg {

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out += c;
        }
    }
    return out;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    void grow(double v) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    void pad() {
        if (!(lo <= hi)) {
            lo = 0.0;
            hi = 1.0;
        }
        if (lo == hi) {
            lo -= 0.5;
            hi += 0.5;
        }
    }
};

} // namespace

std::vector<double> nice_ticks(double lo, double hi, int target) {
    if (!(hi > lo))
        return {lo};
    const double raw = (hi - lo) / std::max(1, target);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (mag * m >= raw) {
            step = mag * m;
            break;
        }
    std::vector<double> ticks;
    for (double v = std::ceil(lo / step) * step; v <= hi + step * 1e-9; v += step)
        ticks.push_back(std::abs(v) < step * 1e-9 ? 0.0 : v);
    return ticks;
}

void LineChart::add(std::string name, std::vector<double> x, std::vector<double> y,
                    bool right_axis, bool dashed) {
    if (x.size() != y.size())
        throw ContractError("svg: series '" + name + "' x/y size mismatch");
    Series s;
    s.name = std::move(name);
    s.x = std::move(x);
    s.y = std::move(y);
    s.color = kPalette[series.size() % (sizeof kPalette / sizeof *kPalette)];
    s.right_axis = right_axis;
    s.dashed = dashed;
    series.push_back(std::move(s));
}

std::string LineChart::render() const {
    const double ml = 64, mr = 64, mt = 36, mb = 46;
    const double pw = width - ml - mr, ph = height - mt - mb;

    Range xr, yl, yr;
    bool has_right = false;
    for (const auto& s : series) {
        for (double v : s.x)
            xr.grow(v);
        for (double v : s.y)
            (s.right_axis ? yr : yl).grow(v);
        has_right = has_right || s.right_axis;
    }
    for (double v : x_marks)
        xr.grow(v);
    xr.pad();
    yl.pad();
    yr.pad();

    auto px = [&](double v) { return ml + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto py = [&](double v, const Range& r) { return mt + ph - (v - r.lo) / (r.hi - r.lo) * ph; };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    for (const auto& c : comments)
        out << "<!-- " << escape(c) << " -->\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\" "
        << "font-family=\"sans-serif\">" << escape(title) << "</text>\n";

    for (double t : nice_ticks(xr.lo, xr.hi)) {
        out << "<line x1=\"" << fmt(px(t)) << "\" y1=\"" << mt << "\" x2=\"" << fmt(px(t))
            << "\" y2=\"" << mt + ph << "\" stroke=\"#eeeeee\"/>\n";
        out << "<text x=\"" << fmt(px(t)) << "\" y=\"" << mt + ph + 16
            << "\" text-anchor=\"middle\" font-size=\"10\" font-family=\"sans-serif\">" << fmt(t)
            << "</text>\n";
    }
    for (double t : nice_ticks(yl.lo, yl.hi)) {
        out << "<line x1=\"" << ml << "\" y1=\"" << fmt(py(t, yl)) << "\" x2=\"" << ml + pw
            << "\" y2=\"" << fmt(py(t, yl)) << "\" stroke=\"#f4f4f4\"/>\n";
        out << "<text x=\"" << ml - 6 << "\" y=\"" << fmt(py(t, yl) + 3)
            << "\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\">" << fmt(t)
            << "</text>\n";
    }
    if (has_right)
        for (double t : nice_ticks(yr.lo, yr.hi))
            out << "<text x=\"" << ml + pw + 6 << "\" y=\"" << fmt(py(t, yr) + 3)
                << "\" text-anchor=\"start\" font-size=\"10\" font-family=\"sans-serif\">"
                << fmt(t) << "</text>\n";

    out << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
        << "\" fill=\"none\" stroke=\"#333333\"/>\n";

    for (double m : x_marks)
        out << "<line x1=\"" << fmt(px(m)) << "\" y1=\"" << mt << "\" x2=\"" << fmt(px(m))
            << "\" y2=\"" << mt + ph << "\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";

    for (const auto& s : series) {
        const Range& r = s.right_axis ? yr : yl;
        out << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.2\"";
        if (s.dashed)
            out << " stroke-dasharray=\"5 3\"";
        out << " points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            out << fmt(px(s.x[i])) << ',' << fmt(py(s.y[i], r)) << ' ';
        out << "\"/>\n";
    }

    double ly = mt + 12;
    for (const auto& s : series) {
        out << "<line x1=\"" << ml + 8 << "\" y1=\"" << fmt(ly - 3) << "\" x2=\"" << ml + 28
            << "\" y2=\"" << fmt(ly - 3) << "\" stroke=\"" << s.color << "\" stroke-width=\"2\""
            << (s.dashed ? " stroke-dasharray=\"5 3\"" : "") << "/>\n";
        out << "<text x=\"" << ml + 32 << "\" y=\"" << fmt(ly)
            << "\" font-size=\"10\" font-family=\"sans-serif\">" << escape(s.name)
            << (s.right_axis ? " (right)" : "") << "</text>\n";
        ly += 13;
    }

    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 8
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">"
        << escape(x_label) << "</text>\n";
    out << "<text x=\"14\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\" "
        << "transform=\"rotate(-90 14 " << mt + ph / 2 << ")\">" << escape(y_label)
        << "</text>\n";
    if (has_right)
        out << "<text x=\"" << width - 12 << "\" y=\"" << mt + ph / 2
            << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\" "
            << "transform=\"rotate(90 " << width - 12 << " " << mt + ph / 2 << ")\">"
            << escape(y2_label) << "</text>\n";
    out << "</svg>\n";
    return out.str();
}

std::string Heatmap::render() const {
    if (values.rows() != static_cast<Eigen::Index>(y_ticks.size()) ||
        values.cols() != static_cast<Eigen::Index>(x_ticks.size()))
        throw ContractError("svg: heatmap shape does not match tick labels");

    const double ml = 70, mr = 90, mt = 36, mb = 52;
    const double pw = width - ml - mr, ph = height - mt - mb;
    const double cw = pw / static_cast<double>(values.cols());
    const double ch = ph / static_cast<double>(values.rows());

    Range vr;
    for (Eigen::Index r = 0; r < values.rows(); ++r)
        for (Eigen::Index c = 0; c < values.cols(); ++c)
            if (std::isfinite(values(r, c)))
                vr.grow(values(r, c));
    vr.pad();

    auto color = [&](double v) {
        // blue -> white -> red
        double t = (v - vr.lo) / (vr.hi - vr.lo);
        t = std::clamp(t, 0.0, 1.0);
        int red, green, blue;
        if (t < 0.5) {
            const double u = t * 2.0;
            red = static_cast<int>(49 + u * (255 - 49));
            green = static_cast<int>(54 + u * (255 - 54));
            blue = static_cast<int>(149 + u * (255 - 149));
        } else {
            const double u = (t - 0.5) * 2.0;
            red = 255;
            green = static_cast<int>(255 - u * (255 - 29));
            blue = static_cast<int>(255 - u * (255 - 29));
        }
        char buf[8];
        std::snprintf(buf, sizeof buf, "#%02x%02x%02x", red, green, blue);
        return std::string(buf);
    };

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    for (const auto& c : comments)
        out << "<!-- " << escape(c) << " -->\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\" "
        << "font-family=\"sans-serif\">" << escape(title) << "</text>\n";

    char cell[48];
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            const double x = ml + cw * static_cast<double>(c);
            const double y = mt + ch * static_cast<double>(r);
            const double v = values(r, c);
            out << "<rect x=\"" << fmt(x) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(cw)
                << "\" height=\"" << fmt(ch) << "\" fill=\""
                << (std::isfinite(v) ? color(v) : "#dddddd") << "\" stroke=\"white\"/>\n";
            if (std::isfinite(v)) {
                std::snprintf(cell, sizeof cell, cell_format.c_str(), v);
                out << "<text x=\"" << fmt(x + cw / 2) << "\" y=\"" << fmt(y + ch / 2 + 3)
                    << "\" text-anchor=\"middle\" font-size=\"9\" font-family=\"sans-serif\">"
                    << cell << "</text>\n";
            }
        }
    }
    for (std::size_t c = 0; c < x_ticks.size(); ++c)
        out << "<text x=\"" << fmt(ml + cw * (static_cast<double>(c) + 0.5)) << "\" y=\""
            << mt + ph + 16 << "\" text-anchor=\"middle\" font-size=\"10\" "
            << "font-family=\"sans-serif\">" << fmt(x_ticks[c]) << "</text>\n";
    for (std::size_t r = 0; r < y_ticks.size(); ++r)
        out << "<text x=\"" << ml - 6 << "\" y=\""
            << fmt(mt + ch * (static_cast<double>(r) + 0.5) + 3)
            << "\" text-anchor=\"end\" font-size=\"10\" font-family=\"sans-serif\">"
            << fmt(y_ticks[r]) << "</text>\n";

    out << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\">"
        << escape(x_label) << "</text>\n";
    out << "<text x=\"16\" y=\"" << mt + ph / 2
        << "\" text-anchor=\"middle\" font-size=\"11\" font-family=\"sans-serif\" "
        << "transform=\"rotate(-90 16 " << mt + ph / 2 << ")\">" << escape(y_label)
        << "</text>\n";

    // colorbar
    const double bx = ml + pw + 18;
    for (int i = 0; i < 60; ++i) {
        const double v = vr.lo + (vr.hi - vr.lo) * (59 - i) / 59.0;
        out << "<rect x=\"" << fmt(bx) << "\" y=\"" << fmt(mt + ph * i / 60.0) << "\" width=\"14\""
            << " height=\"" << fmt(ph / 60.0 + 0.5) << "\" fill=\"" << color(v) << "\"/>\n";
    }
    out << "<text x=\"" << fmt(bx + 18) << "\" y=\"" << mt + 8
        << "\" font-size=\"9\" font-family=\"sans-serif\">" << fmt(vr.hi) << "</text>\n";
    out << "<text x=\"" << fmt(bx + 18) << "\" y=\"" << mt + ph
        << "\" font-size=\"9\" font-family=\"sans-serif\">" << fmt(vr.lo) << "</text>\n";
    out << "</svg>\n";
    return out.str();
}

} // namespace leakwatch::svg
