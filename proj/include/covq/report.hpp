#pragma once

// Recovery reports, support comparison against ground truth, and the small
// statistics helpers shared by the bench command and the acceptance suite.

#include <cstdint>
#include <string>
#include <vector>

#include "covq/oracle.hpp"
#include "covq/treewidth_recovery.hpp"

namespace covq {

struct SupportDiff {
    long long true_positive = 0;
    long long false_positive = 0;
    long long false_negative = 0;
    std::vector<std::pair<int, int>> fp_edges, fn_edges;
    bool exact() const { return false_positive == 0 && false_negative == 0; }
};

SupportDiff compare_support(std::vector<std::pair<int, int>> recovered,
                            std::vector<std::pair<int, int>> truth);

// Off-diagonal support of sparse precision triplets (|v| > rel_tol * max diag).
std::vector<std::pair<int, int>> support_of_triplets(
    const std::vector<std::tuple<int, int, double>>& triplets, double rel_tol = 1e-8);

struct RecoveryReport {
    std::string schema = "covquery-report-v1";
    std::string instance_id;
    std::string algorithm;
    std::string oracle_kind = "exact";
    std::string params_echo;  // JSON fragment with the effective parameters
    QueryStats queries;
    double wall_ms = 0.0;
    int recursion_depth = 0;
    int retries = 0;
    SupportDiff diff;
    bool truth_available = false;
    double max_precision_error = -1.0;  // max |Khat - K| over all entries
    bool success = false;
    std::string diagnostic;

    std::string to_json() const;
};

// least-squares slope of log(q) against log(n)
double fit_loglog_exponent(const std::vector<std::pair<double, double>>& points);

double median(std::vector<double> xs);

}  // namespace covq
