#include "sepsa/gradcheck.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>

#include "sepsa/rng.hpp"
#include "sepsa/tensor.hpp"

namespace sepsa {
namespace {

using Build = std::function<TensorD(std::vector<TensorD>&)>;

double rel_err(double analytic, double numeric) {
    return std::abs(analytic - numeric) /
           std::max({std::abs(analytic), std::abs(numeric), 1.0});
}

double eval_loss(const std::vector<std::vector<int>>& shapes,
                 const std::vector<std::vector<double>>& vals, const Build& build,
                 const std::vector<double>& w) {
    NoGradGuard ng;
    std::vector<TensorD> leaves;
    leaves.reserve(shapes.size());
    for (size_t i = 0; i < shapes.size(); ++i)
        leaves.push_back(TensorD::from_values(shapes[i], vals[i]));
    TensorD out = build(leaves);
    double acc = 0.0;
    for (size_t i = 0; i < w.size(); ++i) acc += out.values()[i] * w[i];
    return acc;
}

// One case: analytic gradients of <build(leaves), w> vs central differences.
double check_case(uint64_t case_seed, const std::vector<std::vector<int>>& shapes,
                  const std::vector<std::vector<double>>& vals,
                  const std::vector<bool>& grad_mask, const Build& build, double step) {
    std::vector<TensorD> leaves;
    leaves.reserve(shapes.size());
    for (size_t i = 0; i < shapes.size(); ++i)
        leaves.push_back(TensorD::from_values(shapes[i], vals[i], grad_mask[i]));
    TensorD out = build(leaves);

    std::vector<double> w(out.numel());
    Rng wrng(Rng::mix(case_seed, 0x5ca1ab1eULL));
    for (auto& v : w) v = wrng.uniform(-1.0, 1.0);

    TensorD loss = dot_sum(out, w);
    loss.backward();

    double max_err = 0.0;
    for (size_t i = 0; i < shapes.size(); ++i) {
        if (!grad_mask[i]) continue;
        const auto& g = leaves[i].node()->grad;
        for (size_t j = 0; j < vals[i].size(); ++j) {
            auto perturbed = vals;
            perturbed[i][j] += step;
            const double lp = eval_loss(shapes, perturbed, build, w);
            perturbed[i][j] -= 2.0 * step;
            const double lm = eval_loss(shapes, perturbed, build, w);
            const double numeric = (lp - lm) / (2.0 * step);
            const double analytic = g.empty() ? 0.0 : g[j];
            max_err = std::max(max_err, rel_err(analytic, numeric));
        }
    }
    return max_err;
}

std::vector<double> randn_vec(Rng& rng, size_t n, double stddev = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal(0.0, stddev);
    return v;
}

// Values with pairwise gaps well above the finite-difference step, so max
// selections cannot flip under the +/-1e-5 perturbation.
std::vector<double> distinct_vec(Rng& rng, size_t n) {
    std::vector<double> v(n);
    for (size_t i = 0; i < n; ++i) v[i] = 0.37 * static_cast<double>(i) + rng.uniform(-0.05, 0.05);
    rng.shuffle(v.begin(), v.end());
    return v;
}

// Values kept away from the ReLU kink.
std::vector<double> offzero_vec(Rng& rng, size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) {
        const double mag = rng.uniform(0.1, 1.5);
        x = rng.uniform() < 0.5 ? -mag : mag;
    }
    return v;
}

struct OpCheck {
    std::string name;
    std::function<double(uint64_t case_seed, double step)> run;  // returns max rel err
};

size_t numel(const std::vector<int>& shape) {
    size_t n = 1;
    for (int d : shape) n *= static_cast<size_t>(d);
    return n;
}

std::vector<OpCheck> build_op_checks() {
    std::vector<OpCheck> ops;

    ops.push_back({"conv1d", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int g = std::array<int, 3>{1, 2, 4}[rng.uniform_index(3)];
        const int n = 1 + static_cast<int>(rng.uniform_index(2));
        const int cin = g * (1 + static_cast<int>(rng.uniform_index(2)));
        const int cout = g * (1 + static_cast<int>(rng.uniform_index(2)));
        const int len = 5 + static_cast<int>(rng.uniform_index(8));
        const int k = 1 + static_cast<int>(rng.uniform_index(3));
        const int stride = 1 + static_cast<int>(rng.uniform_index(2));
        const int pad = static_cast<int>(rng.uniform_index(3));
        std::vector<std::vector<int>> shapes = {{n, cin, len}, {cout, cin / g, k}, {cout}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0])),
                                                 randn_vec(rng, numel(shapes[1])),
                                                 randn_vec(rng, numel(shapes[2]))};
        return check_case(cs, shapes, vals, {true, true, true},
                          [=](std::vector<TensorD>& L) { return conv1d(L[0], L[1], L[2], stride, pad, g); },
                          step);
    }});

    ops.push_back({"batch_norm1d[train]", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 2 + static_cast<int>(rng.uniform_index(2));
        const int c = 1 + static_cast<int>(rng.uniform_index(4));
        const int len = 2 + static_cast<int>(rng.uniform_index(4));
        std::vector<std::vector<int>> shapes = {{n, c, len}, {c}, {c}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0])),
                                                 randn_vec(rng, static_cast<size_t>(c)),
                                                 randn_vec(rng, static_cast<size_t>(c))};
        return check_case(cs, shapes, vals, {true, true, true},
                          [](std::vector<TensorD>& L) {
                              return batch_norm1d<double>(L[0], L[1], L[2], nullptr, true);
                          },
                          step);
    }});

    ops.push_back({"batch_norm1d[eval]", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 1 + static_cast<int>(rng.uniform_index(2));
        const int c = 1 + static_cast<int>(rng.uniform_index(4));
        const int len = 2 + static_cast<int>(rng.uniform_index(4));
        auto running = std::make_shared<BatchNormRunning<double>>(c);
        for (int i = 0; i < c; ++i) {
            running->mean[static_cast<size_t>(i)] = rng.normal();
            running->var[static_cast<size_t>(i)] = rng.uniform(0.2, 2.0);
        }
        std::vector<std::vector<int>> shapes = {{n, c, len}, {c}, {c}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0])),
                                                 randn_vec(rng, static_cast<size_t>(c)),
                                                 randn_vec(rng, static_cast<size_t>(c))};
        return check_case(cs, shapes, vals, {true, true, true},
                          [running](std::vector<TensorD>& L) {
                              return batch_norm1d<double>(L[0], L[1], L[2], running.get(), false);
                          },
                          step);
    }});

    ops.push_back({"relu", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 1 + static_cast<int>(rng.uniform_index(2));
        const int c = 1 + static_cast<int>(rng.uniform_index(3));
        const int len = 3 + static_cast<int>(rng.uniform_index(6));
        std::vector<std::vector<int>> shapes = {{n, c, len}};
        std::vector<std::vector<double>> vals = {offzero_vec(rng, numel(shapes[0]))};
        return check_case(cs, shapes, vals, {true},
                          [](std::vector<TensorD>& L) { return relu(L[0]); }, step);
    }});

    ops.push_back({"sigmoid", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 2 + static_cast<int>(rng.uniform_index(6));
        std::vector<std::vector<int>> shapes = {{n}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0]), 2.0)};
        return check_case(cs, shapes, vals, {true},
                          [](std::vector<TensorD>& L) { return sigmoid(L[0]); }, step);
    }});

    ops.push_back({"max_pool1d", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 1 + static_cast<int>(rng.uniform_index(2));
        const int c = 1 + static_cast<int>(rng.uniform_index(3));
        const int len = 6 + static_cast<int>(rng.uniform_index(6));
        const int k = 2 + static_cast<int>(rng.uniform_index(2));
        const int stride = 1 + static_cast<int>(rng.uniform_index(2));
        std::vector<std::vector<int>> shapes = {{n, c, len}};
        std::vector<std::vector<double>> vals = {distinct_vec(rng, numel(shapes[0]))};
        return check_case(cs, shapes, vals, {true},
                          [=](std::vector<TensorD>& L) { return max_pool1d(L[0], k, stride); }, step);
    }});

    ops.push_back({"global_max_pool1d", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 1 + static_cast<int>(rng.uniform_index(2));
        const int c = 1 + static_cast<int>(rng.uniform_index(4));
        const int len = 3 + static_cast<int>(rng.uniform_index(8));
        std::vector<std::vector<int>> shapes = {{n, c, len}};
        std::vector<std::vector<double>> vals = {distinct_vec(rng, numel(shapes[0]))};
        return check_case(cs, shapes, vals, {true},
                          [](std::vector<TensorD>& L) { return global_max_pool1d(L[0]); }, step);
    }});

    ops.push_back({"global_avg_pool1d", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 1 + static_cast<int>(rng.uniform_index(2));
        const int c = 1 + static_cast<int>(rng.uniform_index(4));
        const int len = 3 + static_cast<int>(rng.uniform_index(8));
        std::vector<std::vector<int>> shapes = {{n, c, len}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0]))};
        return check_case(cs, shapes, vals, {true},
                          [](std::vector<TensorD>& L) { return global_avg_pool1d(L[0]); }, step);
    }});

    ops.push_back({"dense", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 1 + static_cast<int>(rng.uniform_index(3));
        const int din = 2 + static_cast<int>(rng.uniform_index(4));
        const int dout = 1 + static_cast<int>(rng.uniform_index(4));
        std::vector<std::vector<int>> shapes = {{n, din}, {dout, din}, {dout}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0])),
                                                 randn_vec(rng, numel(shapes[1])),
                                                 randn_vec(rng, numel(shapes[2]))};
        return check_case(cs, shapes, vals, {true, true, true},
                          [](std::vector<TensorD>& L) { return dense(L[0], L[1], L[2]); }, step);
    }});

    ops.push_back({"spatial_dropout", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 1 + static_cast<int>(rng.uniform_index(2));
        const int c = 2 + static_cast<int>(rng.uniform_index(4));
        const int len = 3 + static_cast<int>(rng.uniform_index(5));
        const double rate = rng.uniform() < 0.5 ? 0.3 : 0.5;
        const uint64_t mask_seed = Rng::mix(cs, 0xd20b0d2ULL);
        std::vector<std::vector<int>> shapes = {{n, c, len}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0]))};
        return check_case(cs, shapes, vals, {true},
                          [=](std::vector<TensorD>& L) {
                              Rng mask_rng(mask_seed);  // frozen mask across re-evaluations
                              return spatial_dropout(L[0], rate, true, mask_rng);
                          },
                          step);
    }});

    ops.push_back({"residual_add", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 1 + static_cast<int>(rng.uniform_index(2));
        const int c = 1 + static_cast<int>(rng.uniform_index(3));
        const int len = 2 + static_cast<int>(rng.uniform_index(6));
        std::vector<std::vector<int>> shapes = {{n, c, len}, {n, c, len}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0])),
                                                 randn_vec(rng, numel(shapes[1]))};
        return check_case(cs, shapes, vals, {true, true},
                          [](std::vector<TensorD>& L) { return add(L[0], L[1]); }, step);
    }});

    ops.push_back({"scale_channels", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 1 + static_cast<int>(rng.uniform_index(2));
        const int c = 1 + static_cast<int>(rng.uniform_index(4));
        const int len = 2 + static_cast<int>(rng.uniform_index(6));
        std::vector<std::vector<int>> shapes = {{n, c, len}, {n, c}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0])),
                                                 randn_vec(rng, numel(shapes[1]))};
        return check_case(cs, shapes, vals, {true, true},
                          [](std::vector<TensorD>& L) { return scale_channels(L[0], L[1]); }, step);
    }});

    ops.push_back({"squeeze_last", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 1 + static_cast<int>(rng.uniform_index(3));
        const int c = 1 + static_cast<int>(rng.uniform_index(5));
        std::vector<std::vector<int>> shapes = {{n, c, 1}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0]))};
        return check_case(cs, shapes, vals, {true},
                          [](std::vector<TensorD>& L) { return squeeze_last(L[0]); }, step);
    }});

    ops.push_back({"sum", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 2 + static_cast<int>(rng.uniform_index(8));
        std::vector<std::vector<int>> shapes = {{n}};
        std::vector<std::vector<double>> vals = {randn_vec(rng, numel(shapes[0]))};
        return check_case(cs, shapes, vals, {true},
                          [](std::vector<TensorD>& L) { return sum(L[0]); }, step);
    }});

    ops.push_back({"bce_loss", [](uint64_t cs, double step) {
        Rng rng(cs);
        const int n = 2 + static_cast<int>(rng.uniform_index(8));
        std::vector<double> scores(static_cast<size_t>(n));
        std::vector<double> targets(static_cast<size_t>(n));
        for (auto& s : scores) s = rng.uniform(0.05, 0.95);
        for (auto& t : targets) t = rng.uniform() < 0.5 ? 0.0 : 1.0;
        std::vector<std::vector<int>> shapes = {{n}, {n}};
        std::vector<std::vector<double>> vals = {scores, targets};
        return check_case(cs, shapes, vals, {true, false},
                          [](std::vector<TensorD>& L) { return bce_loss(L[0], L[1]); }, step);
    }});

    return ops;
}

}  // namespace

GradCheckReport run_grad_checks(uint64_t seed, int cases_per_op) {
    GradCheckReport report;
    report.seed = seed;
    for (const auto& op : build_op_checks()) {
        GradCheckEntry entry;
        entry.op = op.name;
        entry.cases = cases_per_op;
        for (int c = 0; c < cases_per_op; ++c) {
            const uint64_t cs = Rng::mix(seed, Rng::hash_str(op.name) + static_cast<uint64_t>(c));
            entry.max_rel_err = std::max(entry.max_rel_err, op.run(cs, report.step));
        }
        entry.pass = entry.max_rel_err < report.tolerance;
        report.entries.push_back(entry);
    }
    return report;
}

std::string format_report(const GradCheckReport& report) {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof(line), "gradient check: step=%.0e tolerance=%.0e seed=%llu\n",
                  report.step, report.tolerance, static_cast<unsigned long long>(report.seed));
    out += line;
    for (const auto& e : report.entries) {
        std::snprintf(line, sizeof(line), "  %-22s cases=%-3d max_rel_err=%.3e  %s\n", e.op.c_str(),
                      e.cases, e.max_rel_err, e.pass ? "pass" : "FAIL");
        out += line;
    }
    return out;
}

}  // namespace sepsa
