#pragma once

// Experiment bookkeeping: tidy per-run records, mean±std summaries, rank
// correlation, and a small self-contained SVG line chart.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "gpvtf/data.hpp"

namespace gpvtf {

struct RunRecord {
    std::size_t run_id = 0;
    double mr = 0.0;
    std::uint64_t seed = 0;
    std::string condition;
    double acc = std::nan("");
    double nmi = std::nan("");
    std::size_t epochs_run = 0;
    double wall_clock_s = 0.0;
    std::string status = "ok";

    bool ok() const noexcept { return status == "ok"; }
};

struct SummaryRow {
    std::string condition;
    double mr = 0.0;
    std::size_t runs = 0;  // successful runs only
    double acc_mean = 0.0, acc_std = 0.0;
    double nmi_mean = 0.0, nmi_std = 0.0;
};

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single value
};

inline MeanStd mean_std(std::span<const double> v) {
    MeanStd r;
    if (v.empty()) return {std::nan(""), std::nan("")};
    r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - r.mean) * (x - r.mean);
        r.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return r;
}

/// Groups successful runs by (condition, mr). Conditions keep first-seen order.
inline std::vector<SummaryRow> summarize(const std::vector<RunRecord>& runs) {
    std::vector<std::string> order;
    std::map<std::pair<std::string, double>, std::pair<std::vector<double>, std::vector<double>>> g;
    std::map<std::string, std::vector<double>> rates;
    for (const auto& r : runs) {
        if (std::find(order.begin(), order.end(), r.condition) == order.end())
            order.push_back(r.condition);
        auto& rs = rates[r.condition];
        if (std::find(rs.begin(), rs.end(), r.mr) == rs.end()) rs.push_back(r.mr);
        auto& cell = g[{r.condition, r.mr}];
        if (!r.ok()) continue;
        cell.first.push_back(r.acc);
        cell.second.push_back(r.nmi);
    }
    std::vector<SummaryRow> out;
    for (const auto& c : order) {
        auto rs = rates[c];
        std::sort(rs.begin(), rs.end());
        for (double mr : rs) {
            const auto& cell = g[{c, mr}];
            const auto a = mean_std(cell.first), n = mean_std(cell.second);
            out.push_back({c, mr, cell.first.size(), a.mean, a.std, n.mean, n.std});
        }
    }
    return out;
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ParameterError("spearman needs two equal-length samples of size >= 2");
    }
    auto ranks = [](std::span<const double> v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (std::size_t i = 0; i < idx.size();) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
            for (std::size_t t = i; t <= j; ++t) r[idx[t]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto rx = ranks(x), ry = ranks(y);
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / rx.size();
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / ry.size();
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------- CSV

inline void write_results_csv(const std::string& path, const std::vector<RunRecord>& runs) {
    auto out = detail::open_out(path);
    out << "run_id,mr,seed,condition,acc,nmi,epochs_run,wall_clock_s,status\n";
    for (const auto& r : runs) {
        out << r.run_id << ',' << detail::format_double(r.mr) << ',' << r.seed << ','
            << r.condition << ',' << (r.ok() ? detail::format_double(r.acc) : "") << ','
            << (r.ok() ? detail::format_double(r.nmi) : "") << ',' << r.epochs_run << ','
            << detail::format_double(r.wall_clock_s) << ',' << r.status << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline void write_summary_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    auto out = detail::open_out(path);
    out << "condition,mr,runs,acc_mean,acc_std,nmi_mean,nmi_std\n";
    for (const auto& r : rows) {
        out << r.condition << ',' << detail::format_double(r.mr) << ',' << r.runs << ','
            << detail::format_double(r.acc_mean) << ',' << detail::format_double(r.acc_std) << ','
            << detail::format_double(r.nmi_mean) << ',' << detail::format_double(r.nmi_std)
            << '\n';
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------- SVG

struct Series {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> err;  // optional ± band half-width per point
};

namespace detail {

inline std::string svg_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::string fixed(double v, int digits = 2) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace detail

/// A plain line chart with error bars, axis ticks and a legend.
inline std::string svg_line_chart(const std::string& title, const std::string& x_label,
                                  const std::string& y_label, const std::vector<Series>& series) {
    constexpr double W = 640, H = 420, L = 70, R = 160, T = 40, B = 60;
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                                    "#8c564b"};
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0;
    double y0 = x0, y1 = -x0;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            const double e = i < s.err.size() && std::isfinite(s.err[i]) ? s.err[i] : 0.0;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, s.y[i] - e);
            y1 = std::max(y1, s.y[i] + e);
        }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    const double pad = std::max(0.02, 0.1 * (y1 - y0));
    y0 = std::max(0.0, y0 - pad);
    y1 = std::min(1.0, y1 + pad);
    if (y1 <= y0) y0 = 0.0, y1 = 1.0;
    const auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    const auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << (L + (W - L - R) / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
      << detail::svg_escape(title) << "</text>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double yv = y0 + (y1 - y0) * t / 5.0;
        o << "<line x1=\"" << L - 4 << "\" y1=\"" << py(yv) << "\" x2=\"" << W - R << "\" y2=\""
          << py(yv) << "\" stroke=\"#ddd\"/>\n";
        o << "<text x=\"" << L - 8 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">"
          << detail::fixed(yv) << "</text>\n";
    }
    std::vector<double> ticks;
    for (const auto& s : series) ticks.insert(ticks.end(), s.x.begin(), s.x.end());
    std::sort(ticks.begin(), ticks.end());
    ticks.erase(std::unique(ticks.begin(), ticks.end()), ticks.end());
    for (double xv : ticks) {
        o << "<line x1=\"" << px(xv) << "\" y1=\"" << H - B << "\" x2=\"" << px(xv) << "\" y2=\""
          << H - B + 4 << "\" stroke=\"black\"/>\n";
        o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
          << detail::fixed(xv) << "</text>\n";
    }
    o << "<text x=\"" << (L + (W - L - R) / 2) << "\" y=\"" << H - 18
      << "\" text-anchor=\"middle\">" << detail::svg_escape(x_label) << "</text>\n";
    o << "<text transform=\"translate(20," << (T + (H - T - B) / 2)
      << ") rotate(-90)\" text-anchor=\"middle\">" << detail::svg_escape(y_label) << "</text>\n";

    for (std::size_t s = 0; s < series.size(); ++s) {
        const auto& sr = series[s];
        const char* color = palette[s % std::size(palette)];
        std::string points;
        for (std::size_t i = 0; i < sr.x.size(); ++i) {
            if (!std::isfinite(sr.y[i])) continue;
            points += detail::fixed(px(sr.x[i])) + "," + detail::fixed(py(sr.y[i])) + " ";
            if (i < sr.err.size() && std::isfinite(sr.err[i]) && sr.err[i] > 0) {
                o << "<line x1=\"" << px(sr.x[i]) << "\" y1=\"" << py(sr.y[i] - sr.err[i])
                  << "\" x2=\"" << px(sr.x[i]) << "\" y2=\"" << py(sr.y[i] + sr.err[i])
                  << "\" stroke=\"" << color << "\" stroke-opacity=\"0.5\"/>\n";
            }
            o << "<circle cx=\"" << px(sr.x[i]) << "\" cy=\"" << py(sr.y[i])
              << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        }
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
          << points << "\"/>\n";
        const double ly = T + 10 + 20.0 * static_cast<double>(s);
        o << "<line x1=\"" << W - R + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 40
          << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        o << "<text x=\"" << W - R + 46 << "\" y=\"" << ly + 4 << "\">"
          << detail::svg_escape(sr.name) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

/// One series per condition: mean metric vs missing rate, std as error bars.
inline std::vector<Series> metric_series(const std::vector<SummaryRow>& rows, bool use_nmi) {
    std::vector<Series> out;
    for (const auto& r : rows) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const Series& s) { return s.name == r.condition; });
        if (it == out.end()) {
            out.push_back({r.condition, {}, {}, {}});
            it = std::prev(out.end());
        }
        it->x.push_back(r.mr);
        it->y.push_back(use_nmi ? r.nmi_mean : r.acc_mean);
        it->err.push_back(use_nmi ? r.nmi_std : r.acc_std);
    }
    return out;
}

}  // namespace gpvtf
