#include "gsnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "gsnet/model.hpp"
#include "gsnet/ops.hpp"
#include "gsnet/qgff.hpp"

namespace gsnet {

namespace {

using V = Var<double>;
using Fn = std::function<V(const std::vector<V>&)>;

constexpr double kStep = 1e-5;
constexpr double kOpTolerance = 1e-4;
constexpr double kHeadTolerance = 1e-3;

Tensor<double> draw(const Shape& shape, Rng& rng) {
    Tensor<double> t(shape);
    for (auto& v : t.values()) {
        v = rng.uniform(-1.0, 1.0);
    }
    return t;
}

double weighted(const Tensor<double>& y, const Tensor<double>& w) {
    double s = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        s += w[i] * y[i];
    }
    return s;
}

struct Accum {
    double diff2 = 0, a2 = 0, n2 = 0;
    std::size_t n = 0;

    void add(double analytic, double numeric) {
        diff2 += (analytic - numeric) * (analytic - numeric);
        a2 += analytic * analytic;
        n2 += numeric * numeric;
        ++n;
    }
    double rel() const { return std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-12}); }
};

// Every coordinate of every input.
Accum check_op(const Fn& f, const std::vector<Shape>& shapes, Rng& rng) {
    std::vector<Tensor<double>> xs;
    std::vector<V> leaves;
    for (const auto& s : shapes) {
        xs.push_back(draw(s, rng));
        leaves.push_back(V::leaf(xs.back(), true));
    }
    const V out = f(leaves);
    const Tensor<double> w = draw(out.shape(), rng);
    backward(out, w);

    auto eval = [&](const std::vector<Tensor<double>>& in) {
        NoGradGuard guard;
        std::vector<V> vs;
        for (const auto& t : in) {
            vs.push_back(V::constant(t));
        }
        return weighted(f(vs).value(), w);
    };
    Accum acc;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        for (std::size_t i = 0; i < xs[k].size(); ++i) {
            auto shifted = xs;
            const double x0 = xs[k][i];
            shifted[k][i] = x0 + kStep;
            const double up = eval(shifted);
            shifted[k][i] = x0 - kStep;
            const double down = eval(shifted);
            const double analytic = leaves[k].has_grad() ? leaves[k].grad()[i] : 0.0;
            acc.add(analytic, (up - down) / (2 * kStep));
        }
    }
    return acc;
}

struct OpCase {
    std::string name;
    Fn f;
    std::vector<Shape> shapes;
};

std::vector<OpCase> op_cases() {
    using namespace ops;
    return {
        {"add", [](const auto& v) { return add(v[0], v[1]); }, {{3, 4}, {3, 4}}},
        {"mul", [](const auto& v) { return mul(v[0], v[1]); }, {{3, 4}, {3, 4}}},
        {"scale", [](const auto& v) { return scale(v[0], 1.7); }, {{5}}},
        {"sum", [](const auto& v) { return sum(v[0]); }, {{2, 3}}},
        {"relu", [](const auto& v) { return relu(v[0]); }, {{4, 5}}},
        {"sigmoid", [](const auto& v) { return sigmoid(v[0]); }, {{4, 5}}},
        {"gelu", [](const auto& v) { return gelu(v[0]); }, {{4, 5}}},
        {"clamp", [](const auto& v) { return clamp(scale(v[0], 0.5), -1.0, 1.0); }, {{4, 5}}},
        {"l2_normalize", [](const auto& v) { return l2_normalize(v[0]); }, {{4, 6}}},
        {"softmax", [](const auto& v) { return softmax_lastdim(v[0]); }, {{3, 7}}},
        {"layer_norm", [](const auto& v) { return layer_norm(v[0], v[1], v[2]); }, {{5, 6}, {6}, {6}}},
        {"reshape", [](const auto& v) { return reshape(v[0], {6, 2}); }, {{3, 4}}},
        {"permute", [](const auto& v) { return permute(v[0], {2, 0, 1}); }, {{2, 3, 4}}},
        {"concat", [](const auto& v) { return concat<double>({v[0], v[1]}, 1); }, {{2, 3, 4}, {2, 2, 4}}},
        {"slice", [](const auto& v) { return slice(v[0], 1, 1, 2); }, {{2, 4, 3}}},
        {"repeat_batch", [](const auto& v) { return repeat_batch(v[0], 3); }, {{1, 2, 3}}},
        {"matmul", [](const auto& v) { return matmul(v[0], v[1]); }, {{2, 3, 4}, {2, 4, 2}}},
        {"linear", [](const auto& v) { return linear(v[0], v[1], v[2]); }, {{2, 3, 4}, {4, 5}, {5}}},
        {"conv2d", [](const auto& v) { return conv2d(v[0], v[1], v[2], 1, 1); }, {{2, 3, 5, 5}, {4, 3, 3, 3}, {4}}},
        {"conv2d_7x7", [](const auto& v) { return conv2d(v[0], v[1], v[2], 1, 3); }, {{2, 1, 4, 4}, {3, 1, 7, 7}, {3}}},
        {"conv2d_stride2", [](const auto& v) { return conv2d(v[0], v[1], v[2], 2, 0); }, {{1, 2, 6, 6}, {3, 2, 2, 2}, {3}}},
        {"deconv2d", [](const auto& v) { return deconv2d(v[0], v[1], v[2], 2, 2); }, {{2, 3, 3, 3}, {3, 2, 2, 2}, {2}}},
        {"group_norm", [](const auto& v) { return group_norm(v[0], 2, v[1], v[2]); }, {{2, 4, 3, 3}, {4}, {4}}},
        {"bilinear_up", [](const auto& v) { return bilinear_resize(v[0], 7, 9); }, {{1, 2, 3, 4}}},
        {"bilinear_down", [](const auto& v) { return bilinear_resize(v[0], 2, 3); }, {{1, 2, 5, 7}}},
        {"cost_volume",
         [](const auto& v) { return compute_cost_volume(v[0], v[1], Stream::Generalist).values; },
         {{3, 4, 6}, {2, 6}}},
    };
}

// Samples a few coordinates of each head parameter.
Accum check_head(Rng& rng) {
    GSNet<double> net(tiny_config());
    const auto d = static_cast<std::int64_t>(net.config().embed_dim);
    Tensor<double> image = draw({3, 32, 32}, rng);
    for (auto& v : image.values()) {
        v = 0.5 + 0.5 * v;
    }
    QuerySet q;
    q.names = {"a", "b"};
    q.embeddings = draw({2, d}, rng);
    const V img = V::constant(image), qv = GSNet<double>::query_var(q);

    std::vector<Parameter<double>*> head;
    for (auto* p : net.params().all()) {
        p->set_trainable(p->group == ParamGroup::Head);
        if (p->group == ParamGroup::Head) {
            head.push_back(p);
        }
    }
    const V out = net.forward(img, qv);
    const Tensor<double> w = draw(out.shape(), rng);
    backward(out, w);
    auto eval = [&] {
        NoGradGuard guard;
        return weighted(net.forward(img, qv).value(), w);
    };
    Accum acc;
    for (auto* p : head) {
        const Tensor<double> g = p->var.has_grad() ? p->var.grad() : Tensor<double>(p->value().shape());
        const auto n = static_cast<std::int64_t>(p->value().size());
        for (int k = 0; k < std::min<std::int64_t>(3, n); ++k) {
            const auto i = static_cast<std::size_t>(rng.below(n));
            double& x = p->mutable_value()[i];
            const double x0 = x;
            x = x0 + kStep;
            const double up = eval();
            x = x0 - kStep;
            const double down = eval();
            x = x0;
            acc.add(g[i], (up - down) / (2 * kStep));
        }
    }
    return acc;
}

}  // namespace

std::vector<GradCheckRow> run_gradient_suite(std::uint64_t seed, int trials) {
    if (trials < 1) {
        throw ContractError("gradient suite needs at least one trial");
    }
    Rng rng(seed);
    std::vector<GradCheckRow> rows;
    for (const auto& c : op_cases()) {
        GradCheckRow row{c.name, 0.0, kOpTolerance, 0, false};
        for (int t = 0; t < trials; ++t) {
            const Accum a = check_op(c.f, c.shapes, rng);
            row.rel_error = std::max(row.rel_error, a.rel());
            row.coords += a.n;
        }
        row.pass = row.rel_error < row.tolerance;
        rows.push_back(row);
    }
    const Accum h = check_head(rng);
    rows.push_back({"head_end_to_end", h.rel(), kHeadTolerance, h.n, h.rel() < kHeadTolerance});
    return rows;
}

std::string format_gradcheck_table(const std::vector<GradCheckRow>& rows) {
    std::ostringstream o;
    o << std::left << std::setw(18) << "op" << std::right << std::setw(12) << "rel_error" << std::setw(10)
      << "tol" << std::setw(8) << "coords" << "  result\n";
    for (const auto& r : rows) {
        o << std::left << std::setw(18) << r.name << std::right << std::scientific << std::setprecision(2)
          << std::setw(12) << r.rel_error << std::setw(10) << r.tolerance << std::defaultfloat << std::setw(8)
          << r.coords << "  " << (r.pass ? "pass" : "FAIL") << "\n";
    }
    return o.str();
}

}  // namespace gsnet
