#include "resdiff/svg.hpp"

#include <algorithm>
#include <cstdio>

namespace resdiff::svg {

namespace {

constexpr double kWidth = 720, kHeight = 260;
constexpr double kLeft = 40, kRight = 12, kTop = 28, kBottom = 20;

void polyline(std::FILE* f, const Vec& v, double lo, double hi, const char* color, double width,
              const char* dash) {
    const double plot_w = kWidth - kLeft - kRight;
    const double plot_h = kHeight - kTop - kBottom;
    std::fprintf(f, "  <polyline fill=\"none\" stroke=\"%s\" stroke-width=\"%.1f\"%s points=\"",
                 color, width, dash ? dash : "");
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        double px = kLeft + plot_w * static_cast<double>(i) / static_cast<double>(v.size() - 1);
        double frac = hi > lo ? (v[i] - lo) / (hi - lo) : 0.5;
        double py = kTop + plot_h * (1.0 - frac);
        std::fprintf(f, "%.1f,%.1f ", px, py);
    }
    std::fputs("\"/>\n", f);
}

} // namespace

void write_overlay(const std::string& path, const Vec& y, const Vec& xhat, const Vec* x,
                   const std::string& title) {
    if (y.size() < 2 || xhat.size() != y.size() || (x && x->size() != y.size()))
        throw DataError("svg: series length mismatch");
    double lo = std::min(y.minCoeff(), xhat.minCoeff());
    double hi = std::max(y.maxCoeff(), xhat.maxCoeff());
    if (x) {
        lo = std::min(lo, x->minCoeff());
        hi = std::max(hi, x->maxCoeff());
    }
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw DataError("cannot write " + path);
    std::fprintf(f,
                 "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                 "viewBox=\"0 0 %.0f %.0f\">\n",
                 kWidth, kHeight, kWidth, kHeight);
    std::fprintf(f, "  <rect width=\"%.0f\" height=\"%.0f\" fill=\"white\"/>\n", kWidth, kHeight);
    std::fprintf(f,
                 "  <rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"none\" "
                 "stroke=\"#999\"/>\n",
                 kLeft, kTop, kWidth - kLeft - kRight, kHeight - kTop - kBottom);
    std::fprintf(f, "  <text x=\"%.0f\" y=\"18\" font-size=\"13\" font-family=\"sans-serif\">%s"
                    "</text>\n",
                 kLeft, title.c_str());
    polyline(f, y, lo, hi, "#9aa0a6", 1.0, nullptr);
    if (x) polyline(f, *x, lo, hi, "#188038", 1.4, " stroke-dasharray=\"5,3\"");
    polyline(f, xhat, lo, hi, "#d93025", 1.4, nullptr);
    std::fprintf(f,
                 "  <text x=\"%.0f\" y=\"18\" font-size=\"11\" font-family=\"sans-serif\" "
                 "text-anchor=\"end\"><tspan fill=\"#9aa0a6\">observation</tspan>"
                 "<tspan dx=\"8\" fill=\"#d93025\">reconstruction</tspan>%s</text>\n",
                 kWidth - kRight,
                 x ? "<tspan dx=\"8\" fill=\"#188038\">truth</tspan>" : "");
    std::fputs("</svg>\n", f);
    std::fclose(f);
}

} // namespace resdiff::svg
