#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nexus/volume.hpp"

namespace nexus {

/// Tumor region as a set of member labels. The three evaluation regions:
/// complete {1,2,3,4}, core {1,3,4}, enhancing {4}.
struct RegionSpec {
    std::string name;
    std::vector<int> member_labels;

    bool contains(int label) const;
};

const std::vector<RegionSpec>& eval_regions();

/// Per-region overlap metrics with the underlying confusion counts.
/// dice = 2TP/(2TP+FP+FN); sensitivity = TP/(TP+FN);
/// specificity = TN/(TN+FP). Degenerate cases (empty truth region) are
/// resolved by convention and flagged:
///   |G|=0, |L|=0 -> dice 1, sensitivity 1 (flag "empty_region")
///   |G|=0, |L|>0 -> dice 0, sensitivity reported as 1 (flag "empty_truth")
struct RegionReport {
    std::string region;
    double dice = 0.0, sensitivity = 0.0, specificity = 0.0;
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::vector<std::string> flags;
};

struct SegReport {
    std::vector<RegionReport> regions;

    const RegionReport& region(const std::string& name) const;
};

/// Voxel-wise comparison of a predicted label map against ground truth
/// for each evaluation region. Extents must match.
SegReport evaluate(const LabelMap& pred, const LabelMap& truth);

/// CSV emission, schema:
/// region,dice,sensitivity,specificity,tp,fp,tn,fn,flags
void write_report_csv(const SegReport& report, std::ostream& out, bool header = true);
std::string report_csv(const SegReport& report);

/// Five-number summary per metric and region over many volumes, with
/// Tukey quartiles and 1.5*IQR whiskers.
struct BoxStats {
    std::string metric; // "dice", "sensitivity", "specificity"
    std::string region;
    double mean = 0.0, median = 0.0, q1 = 0.0, q3 = 0.0;
    double whisker_lo = 0.0, whisker_hi = 0.0;
    std::vector<double> outliers;
};

std::vector<BoxStats> report_boxstats(const std::vector<SegReport>& reports);
void write_boxstats_csv(const std::vector<BoxStats>& stats, std::ostream& out);

} // namespace nexus
