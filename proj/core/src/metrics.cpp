#include "nexus/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "nexus/error.hpp"

namespace nexus {

bool RegionSpec::contains(int label) const {
    return std::find(member_labels.begin(), member_labels.end(), label) != member_labels.end();
}

const std::vector<RegionSpec>& eval_regions() {
    static const std::vector<RegionSpec> regions = {
        {"complete", {1, 2, 3, 4}},
        {"core", {1, 3, 4}},
        {"enhancing", {4}},
    };
    return regions;
}

const RegionReport& SegReport::region(const std::string& name) const {
    for (const RegionReport& r : regions)
        if (r.region == name) return r;
    throw ParamError("no region '" + name + "' in report");
}

SegReport evaluate(const LabelMap& pred, const LabelMap& truth) {
    if (!pred.same_extents(truth))
        throw ShapeError("evaluate: prediction and truth extents differ");

    SegReport report;
    for (const RegionSpec& spec : eval_regions()) {
        std::array<bool, 5> member{};
        for (int lbl : spec.member_labels) member[static_cast<std::size_t>(lbl)] = true;

        RegionReport r;
        r.region = spec.name;
        for (std::size_t i = 0; i < truth.size(); ++i) {
            const bool g = member[truth.labels[i]];
            const bool l = member[pred.labels[i]];
            if (g && l)
                ++r.tp;
            else if (!g && l)
                ++r.fp;
            else if (g && !l)
                ++r.fn;
            else
                ++r.tn;
        }

        const std::uint64_t G = r.tp + r.fn, L = r.tp + r.fp;
        if (G == 0 && L == 0) {
            r.dice = 1.0;
            r.sensitivity = 1.0;
            r.flags.push_back("empty_region");
        } else if (G == 0) {
            r.dice = 0.0;
            r.sensitivity = 1.0; // undefined; reported as 1 and flagged
            r.flags.push_back("empty_truth");
        } else {
            r.dice = 2.0 * static_cast<double>(r.tp) / static_cast<double>(2 * r.tp + r.fp + r.fn);
            r.sensitivity = static_cast<double>(r.tp) / static_cast<double>(G);
        }
        const std::uint64_t Go = r.tn + r.fp;
        r.specificity = Go == 0 ? 1.0 : static_cast<double>(r.tn) / static_cast<double>(Go);
        if (Go == 0) r.flags.push_back("empty_normal");
        report.regions.push_back(std::move(r));
    }
    return report;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

std::string join_flags(const std::vector<std::string>& flags) {
    std::string s;
    for (std::size_t i = 0; i < flags.size(); ++i) {
        if (i) s += ";";
        s += flags[i];
    }
    return s;
}

double median_of(const std::vector<double>& sorted, std::size_t lo, std::size_t hi) {
    // median of sorted[lo, hi)
    const std::size_t n = hi - lo;
    const std::size_t mid = lo + n / 2;
    if (n % 2 == 1) return sorted[mid];
    return 0.5 * (sorted[mid - 1] + sorted[mid]);
}

} // namespace

void write_report_csv(const SegReport& report, std::ostream& out, bool header) {
    if (header) out << "region,dice,sensitivity,specificity,tp,fp,tn,fn,flags\n";
    for (const RegionReport& r : report.regions) {
        out << r.region << "," << fmt(r.dice) << "," << fmt(r.sensitivity) << ","
            << fmt(r.specificity) << "," << r.tp << "," << r.fp << "," << r.tn << "," << r.fn
            << "," << join_flags(r.flags) << "\n";
    }
}

std::string report_csv(const SegReport& report) {
    std::ostringstream os;
    write_report_csv(report, os);
    return os.str();
}

std::vector<BoxStats> report_boxstats(const std::vector<SegReport>& reports) {
    if (reports.empty()) throw ParamError("report_boxstats: empty report list");
    std::vector<BoxStats> all;
    const char* metrics[] = {"dice", "sensitivity", "specificity"};
    for (const RegionSpec& spec : eval_regions()) {
        for (const char* metric : metrics) {
            std::vector<double> values;
            values.reserve(reports.size());
            for (const SegReport& rep : reports) {
                const RegionReport& r = rep.region(spec.name);
                if (metric == std::string("dice"))
                    values.push_back(r.dice);
                else if (metric == std::string("sensitivity"))
                    values.push_back(r.sensitivity);
                else
                    values.push_back(r.specificity);
            }
            std::sort(values.begin(), values.end());
            BoxStats b;
            b.metric = metric;
            b.region = spec.name;
            double sum = 0.0;
            for (double v : values) sum += v;
            b.mean = sum / static_cast<double>(values.size());
            const std::size_t n = values.size();
            b.median = median_of(values, 0, n);
            if (n == 1) {
                b.q1 = b.q3 = values[0];
            } else {
                // Tukey hinges: medians of the lower/upper halves, middle
                // element excluded when n is odd.
                b.q1 = median_of(values, 0, n / 2);
                b.q3 = median_of(values, (n + 1) / 2, n);
            }
            const double iqr = b.q3 - b.q1;
            const double lo_fence = b.q1 - 1.5 * iqr, hi_fence = b.q3 + 1.5 * iqr;
            b.whisker_lo = b.q3;
            b.whisker_hi = b.q1;
            for (double v : values) {
                if (v < lo_fence || v > hi_fence)
                    b.outliers.push_back(v);
                else {
                    b.whisker_lo = std::min(b.whisker_lo, v);
                    b.whisker_hi = std::max(b.whisker_hi, v);
                }
            }
            all.push_back(std::move(b));
        }
    }
    return all;
}

void write_boxstats_csv(const std::vector<BoxStats>& stats, std::ostream& out) {
    out << "metric,region,mean,median,q1,q3,whisker_lo,whisker_hi,outliers\n";
    for (const BoxStats& b : stats) {
        out << b.metric << "," << b.region << "," << fmt(b.mean) << "," << fmt(b.median) << ","
            << fmt(b.q1) << "," << fmt(b.q3) << "," << fmt(b.whisker_lo) << ","
            << fmt(b.whisker_hi) << ",";
        for (std::size_t i = 0; i < b.outliers.size(); ++i)
            out << (i ? ";" : "") << fmt(b.outliers[i]);
        out << "\n";
    }
}

} // namespace nexus
