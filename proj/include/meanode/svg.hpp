#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "meanode/common.hpp"

namespace meanode {

// Minimal hand-rolled SVG line plots (linear or log10 axes) plus
// gnuplot-style .dat twins. Plots are derived artifacts; every figure also
// writes the plotted numbers as CSV.

struct Series {
    std::string label;
    std::vector<double> x, y;
    std::string color;  // empty: palette
    bool line = true;
    bool markers = false;
};

class LinePlot {
public:
    std::string title, xlabel, ylabel;
    bool logx = false, logy = false;

    void add(Series s) { series_.push_back(std::move(s)); }
    const std::vector<Series>& series() const { return series_; }

    void write_svg(const std::string& path) const {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + path);
        f << render();
        if (!f) throw IoError("write failed: " + path);
    }

    void write_dat(const std::string& path) const {
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw IoError("cannot open for writing: " + path);
        for (const auto& s : series_) {
            f << "# " << s.label << "\n";
            for (std::size_t i = 0; i < s.x.size(); ++i)
                f << fmt(s.x[i]) << " " << fmt(s.y[i]) << "\n";
            f << "\n\n";
        }
        if (!f) throw IoError("write failed: " + path);
    }

private:
    std::vector<Series> series_;

    static std::string fmt(double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.10g", v);
        return buf;
    }

    static std::string escape(const std::string& s) {
        std::string out;
        for (char c : s) {
            if (c == '&') out += "&amp;";
            else if (c == '<') out += "&lt;";
            else if (c == '>') out += "&gt;";
            else out += c;
        }
        return out;
    }

    double txv(double v) const { return logx ? std::log10(v) : v; }
    double tyv(double v) const { return logy ? std::log10(v) : v; }
    bool usable(double x, double y) const {
        if (!std::isfinite(x) || !std::isfinite(y)) return false;
        if (logx && !(x > 0.0)) return false;
        if (logy && !(y > 0.0)) return false;
        return true;
    }

    static std::vector<double> linear_ticks(double lo, double hi) {
        double span = hi - lo;
        double step = std::pow(10.0, std::floor(std::log10(span / 4.0)));
        for (double mult : {1.0, 2.0, 5.0, 10.0}) {
            if (span / (step * mult) <= 6.0) {
                step *= mult;
                break;
            }
        }
        std::vector<double> ticks;
        double t = std::ceil(lo / step) * step;
        for (; t <= hi + 1e-12 * span; t += step) ticks.push_back(t);
        return ticks;
    }

    std::string render() const {
        const double W = 640, H = 440, ml = 74, mr = 18, mt = 34, mb = 56;
        const double pw = W - ml - mr, ph = H - mt - mb;
        static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                        "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f"};

        double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
        for (const auto& s : series_)
            for (std::size_t i = 0; i < s.x.size(); ++i) {
                if (!usable(s.x[i], s.y[i])) continue;
                xmin = std::min(xmin, txv(s.x[i]));
                xmax = std::max(xmax, txv(s.x[i]));
                ymin = std::min(ymin, tyv(s.y[i]));
                ymax = std::max(ymax, tyv(s.y[i]));
            }
        if (xmin > xmax) {
            xmin = 0;
            xmax = 1;
            ymin = 0;
            ymax = 1;
        }
        if (xmax - xmin < 1e-12) {
            xmin -= 0.5;
            xmax += 0.5;
        }
        if (ymax - ymin < 1e-12) {
            ymin -= 0.5;
            ymax += 0.5;
        }
        double xpad = 0.03 * (xmax - xmin), ypad = 0.05 * (ymax - ymin);
        xmin -= xpad;
        xmax += xpad;
        ymin -= ypad;
        ymax += ypad;

        auto px = [&](double v) { return ml + (txv(v) - xmin) / (xmax - xmin) * pw; };
        auto py = [&](double v) { return mt + ph - (tyv(v) - ymin) / (ymax - ymin) * ph; };

        std::string out;
        out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(W) + "\" height=\"" +
               fmt(H) + "\" viewBox=\"0 0 " + fmt(W) + " " + fmt(H) + "\">\n";
        out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out += "<rect x=\"" + fmt(ml) + "\" y=\"" + fmt(mt) + "\" width=\"" + fmt(pw) +
               "\" height=\"" + fmt(ph) + "\" fill=\"none\" stroke=\"#444\"/>\n";

        auto tick_label = [&](double v, bool is_log) {
            char buf[40];
            if (is_log)
                std::snprintf(buf, sizeof(buf), "1e%d", static_cast<int>(std::lround(v)));
            else
                std::snprintf(buf, sizeof(buf), "%.4g", std::abs(v) < 1e-12 ? 0.0 : v);
            return std::string(buf);
        };

        // x ticks
        std::vector<double> xt;
        if (logx)
            for (double e = std::ceil(xmin); e <= std::floor(xmax); e += 1.0) xt.push_back(e);
        else
            xt = linear_ticks(xmin, xmax);
        for (double t : xt) {
            double gx = ml + (t - xmin) / (xmax - xmin) * pw;
            out += "<line x1=\"" + fmt(gx) + "\" y1=\"" + fmt(mt) + "\" x2=\"" + fmt(gx) +
                   "\" y2=\"" + fmt(mt + ph) + "\" stroke=\"#ddd\"/>\n";
            out += "<text x=\"" + fmt(gx) + "\" y=\"" + fmt(mt + ph + 16) +
                   "\" font-size=\"11\" text-anchor=\"middle\">" + tick_label(t, logx) +
                   "</text>\n";
        }
        // y ticks
        std::vector<double> yt;
        if (logy)
            for (double e = std::ceil(ymin); e <= std::floor(ymax); e += 1.0) yt.push_back(e);
        else
            yt = linear_ticks(ymin, ymax);
        for (double t : yt) {
            double gy = mt + ph - (t - ymin) / (ymax - ymin) * ph;
            out += "<line x1=\"" + fmt(ml) + "\" y1=\"" + fmt(gy) + "\" x2=\"" + fmt(ml + pw) +
                   "\" y2=\"" + fmt(gy) + "\" stroke=\"#ddd\"/>\n";
            out += "<text x=\"" + fmt(ml - 6) + "\" y=\"" + fmt(gy + 4) +
                   "\" font-size=\"11\" text-anchor=\"end\">" + tick_label(t, logy) + "</text>\n";
        }

        // series
        int ci = 0;
        for (const auto& s : series_) {
            std::string color = s.color.empty() ? palette[ci % 8] : s.color;
            ++ci;
            if (s.line) {
                std::string pts;
                for (std::size_t i = 0; i < s.x.size(); ++i) {
                    if (!usable(s.x[i], s.y[i])) continue;
                    pts += fmt(px(s.x[i])) + "," + fmt(py(s.y[i])) + " ";
                }
                if (!pts.empty())
                    out += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color +
                           "\" stroke-width=\"1.5\"/>\n";
            }
            if (s.markers) {
                for (std::size_t i = 0; i < s.x.size(); ++i) {
                    if (!usable(s.x[i], s.y[i])) continue;
                    out += "<circle cx=\"" + fmt(px(s.x[i])) + "\" cy=\"" + fmt(py(s.y[i])) +
                           "\" r=\"3\" fill=\"" + color + "\"/>\n";
                }
            }
        }

        // legend
        double ly = mt + 14;
        ci = 0;
        for (const auto& s : series_) {
            std::string color = s.color.empty() ? palette[ci % 8] : s.color;
            ++ci;
            if (s.label.empty()) continue;
            out += "<line x1=\"" + fmt(ml + pw - 150) + "\" y1=\"" + fmt(ly - 4) + "\" x2=\"" +
                   fmt(ml + pw - 132) + "\" y2=\"" + fmt(ly - 4) + "\" stroke=\"" + color +
                   "\" stroke-width=\"2\"/>\n";
            out += "<text x=\"" + fmt(ml + pw - 126) + "\" y=\"" + fmt(ly) +
                   "\" font-size=\"11\">" + escape(s.label) + "</text>\n";
            ly += 15;
        }

        if (!title.empty())
            out += "<text x=\"" + fmt(W / 2) + "\" y=\"20\" font-size=\"14\" "
                   "text-anchor=\"middle\">" + escape(title) + "</text>\n";
        if (!xlabel.empty())
            out += "<text x=\"" + fmt(ml + pw / 2) + "\" y=\"" + fmt(H - 14) +
                   "\" font-size=\"12\" text-anchor=\"middle\">" + escape(xlabel) + "</text>\n";
        if (!ylabel.empty())
            out += "<text x=\"16\" y=\"" + fmt(mt + ph / 2) +
                   "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
                   fmt(mt + ph / 2) + ")\">" + escape(ylabel) + "</text>\n";
        out += "</svg>\n";
        return out;
    }
};

}  // namespace meanode
