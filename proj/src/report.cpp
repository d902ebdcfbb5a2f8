#include "covq/report.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

namespace covq {

SupportDiff compare_support(std::vector<std::pair<int, int>> recovered,
                            std::vector<std::pair<int, int>> truth) {
    auto norm = [](std::vector<std::pair<int, int>>& e) {
        for (auto& [u, v] : e)
            if (u > v) std::swap(u, v);
        std::sort(e.begin(), e.end());
        e.erase(std::unique(e.begin(), e.end()), e.end());
    };
    norm(recovered);
    norm(truth);
    SupportDiff d;
    std::set_difference(recovered.begin(), recovered.end(), truth.begin(), truth.end(),
                        std::back_inserter(d.fp_edges));
    std::set_difference(truth.begin(), truth.end(), recovered.begin(), recovered.end(),
                        std::back_inserter(d.fn_edges));
    d.false_positive = static_cast<long long>(d.fp_edges.size());
    d.false_negative = static_cast<long long>(d.fn_edges.size());
    d.true_positive = static_cast<long long>(recovered.size()) - d.false_positive;
    return d;
}

std::vector<std::pair<int, int>> support_of_triplets(
    const std::vector<std::tuple<int, int, double>>& triplets, double rel_tol) {
    double max_diag = 0.0;
    for (auto [i, j, v] : triplets)
        if (i == j) max_diag = std::max(max_diag, std::fabs(v));
    const double tol = rel_tol * max_diag;
    std::vector<std::pair<int, int>> edges;
    for (auto [i, j, v] : triplets)
        if (i != j && std::fabs(v) > tol)
            edges.emplace_back(std::min(i, j), std::max(i, j));
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

std::string RecoveryReport::to_json() const {
    nlohmann::json j;
    j["schema"] = schema;
    j["instance"] = instance_id;
    j["algorithm"] = algorithm;
    j["oracle"] = oracle_kind;
    if (!params_echo.empty()) j["params"] = nlohmann::json::parse(params_echo);
    j["raw_queries"] = queries.raw_queries;
    j["distinct_queries"] = queries.distinct_queries;
    j["wall_ms"] = wall_ms;
    j["recursion_depth"] = recursion_depth;
    j["retries"] = retries;
    j["success"] = success;
    if (!diagnostic.empty()) j["diagnostic"] = diagnostic;
    if (truth_available) {
        j["edges_true_positive"] = diff.true_positive;
        j["edges_false_positive"] = diff.false_positive;
        j["edges_false_negative"] = diff.false_negative;
        j["support_exact"] = diff.exact();
        if (max_precision_error >= 0.0) j["max_precision_error"] = max_precision_error;
    }
    return j.dump(2);
}

double fit_loglog_exponent(const std::vector<std::pair<double, double>>& points) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(points.size());
    for (auto [x, y] : points) {
        double lx = std::log(x), ly = std::log(y);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double median(std::vector<double> xs) {
    if (xs.empty()) return 0.0;
    std::sort(xs.begin(), xs.end());
    const std::size_t m = xs.size() / 2;
    return xs.size() % 2 == 1 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

}  // namespace covq
