#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mammofl/image.hpp"

namespace mammofl::stats {

/// Dice-Sorensen coefficient 2|X∩Y| / (|X|+|Y|). Two empty masks agree
/// perfectly: 1.0.
double dice(const BinaryMask& x, const BinaryMask& y);

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // n-1 denominator; 0 when n == 1
};

/// Mean absolute error between paired PD values, in percentage points.
MeanStd mae(const std::vector<std::pair<double, double>>& pairs);

MeanStd mean_std(const std::vector<double>& values);

struct CorrelationResult {
    double rho = 0.0;
    double p_value = 1.0;
    std::optional<double> ci_low;   // 95% CI needs n >= 4
    std::optional<double> ci_high;
    int n = 0;
};

/// Spearman rank correlation with average ranks for ties. p-value from
/// t = rho*sqrt((n-2)/(1-rho^2)) against Student's t (normal reference for
/// n >= 30); CI via the Fisher transform with the Bonett-Wright standard
/// error sqrt((1+rho^2/2)/(n-3)). Constant inputs are an error.
CorrelationResult spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct WilcoxonResult {
    double w_plus = 0.0;
    double p_value = 1.0;
    int n = 0;          // nonzero differences
    bool exact = false; // exact sign-flip distribution vs normal approximation
};

/// Wilcoxon signed-rank test on paired differences. Zero differences are
/// dropped; |d| gets average ranks. For n <= 25 the p-value comes from the
/// exact 2^n sign-flip distribution (dynamic program over doubled ranks);
/// beyond that, normal approximation with tie-corrected variance
/// n(n+1)(2n+1)/24 - sum(t^3-t)/48 and continuity correction 0.5. All-zero
/// input returns W+ = 0, p = 1.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs);

/// Average ranks (ties averaged), 1-based.
std::vector<double> average_ranks(const std::vector<double>& values);

/// Per-image evaluation record; pd_pred is empty when the predicted breast
/// mask came out empty.
struct EvalRecord {
    std::string subject_id;
    std::string image_id;
    double pd_true = 0.0;
    std::optional<double> pd_pred;
    double breast_dsc = 0.0;
    double dense_dsc = 0.0;
};

/// Per-subject means of each metric, ordered by subject id. Records with
/// undefined pd_pred contribute to the DSC means but not the PD error mean.
struct SubjectSummary {
    std::string subject_id;
    double abs_err = 0.0;  // mean |pd_true - pd_pred| over defined records
    double breast_dsc = 0.0;
    double dense_dsc = 0.0;
    int n_images = 0;
    int n_defined = 0;
};

std::vector<SubjectSummary> collapse_by_subject(const std::vector<EvalRecord>& records);

/// CSV with the fixed header
/// "subject_id,image_id,pd_true,pd_pred,breast_dsc,dense_dsc"; undefined
/// pd_pred serializes as an empty field.
std::string records_to_csv(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> records_from_csv(const std::string& csv);

}  // namespace mammofl::stats
