#include <gtest/gtest.h>

#include <filesystem>
#include <functional>

#include "ctxpara/nn.hpp"

using namespace ctxpara;
using namespace ctxpara::nn;

namespace {

Matrix random_matrix(int r, int c, Rng& rng) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
    return m;
}

// Compares backward() against central differences for every entry of `x`.
void check_gradient(const std::function<Var(const Var&)>& f, Matrix x0, double tol = 1e-5) {
    auto x = parameter(x0);
    auto y = f(x);
    backward(y);
    const Matrix analytic = x->grad;
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        Matrix xp = x0, xm = x0;
        xp.data()[i] += h;
        xm.data()[i] -= h;
        const double fp = f(constant(xp))->value(0, 0);
        const double fm = f(constant(xm))->value(0, 0);
        const double numeric = (fp - fm) / (2 * h);
        EXPECT_NEAR(analytic.data()[i], numeric, tol * std::max(1.0, std::abs(numeric))) << "entry " << i;
    }
}

}  // namespace

TEST(Autograd, MatmulAndAdd) {
    Rng rng(1);
    const Matrix b = random_matrix(3, 2, rng), w = random_matrix(4, 2, rng);
    check_gradient([&](const Var& x) { return weighted_sum(add(matmul(x, constant(b)), constant(w)), w); },
                   random_matrix(4, 3, rng));
}

TEST(Autograd, MatmulTransposed) {
    Rng rng(2);
    const Matrix b = random_matrix(5, 3, rng), w = random_matrix(4, 5, rng);
    check_gradient([&](const Var& x) { return weighted_sum(matmul_transposed(x, constant(b)), w); },
                   random_matrix(4, 3, rng));
    check_gradient([&](const Var& x) { return weighted_sum(matmul_transposed(constant(b), x), w.transpose()); },
                   random_matrix(4, 3, rng));
}

TEST(Autograd, Gelu) {
    Rng rng(3);
    const Matrix w = random_matrix(3, 4, rng);
    check_gradient([&](const Var& x) { return weighted_sum(gelu(x), w); }, random_matrix(3, 4, rng));
}

TEST(Autograd, LayerNorm) {
    Rng rng(4);
    const Matrix g = random_matrix(1, 5, rng), b = random_matrix(1, 5, rng), w = random_matrix(3, 5, rng);
    check_gradient([&](const Var& x) { return weighted_sum(layer_norm(x, constant(g), constant(b)), w); },
                   random_matrix(3, 5, rng), 1e-4);
    const Matrix x = random_matrix(3, 5, rng);
    check_gradient([&](const Var& gv) { return weighted_sum(layer_norm(constant(x), gv, constant(b)), w); }, g);
}

TEST(Autograd, CausalSoftmaxAndLogSoftmax) {
    Rng rng(5);
    const Matrix w = random_matrix(4, 4, rng);
    check_gradient([&](const Var& x) { return weighted_sum(causal_softmax(x), w); }, random_matrix(4, 4, rng));
    check_gradient([&](const Var& x) { return weighted_sum(log_softmax_rows(x), w); }, random_matrix(4, 4, rng));
}

TEST(Autograd, CausalMaskZeroesFuture) {
    Rng rng(6);
    const auto p = causal_softmax(constant(random_matrix(4, 4, rng)));
    for (int i = 0; i < 4; ++i) {
        EXPECT_NEAR(p->value.row(i).sum(), 1.0, 1e-12);
        for (int j = i + 1; j < 4; ++j) EXPECT_EQ(p->value(i, j), 0.0);
    }
}

TEST(Autograd, GatherPickConcat) {
    Rng rng(7);
    const std::vector<int> ids = {2, 0, 2};
    const std::vector<int> rows = {0, 1, 2}, cols = {1, 0, 3};
    const Matrix other = random_matrix(3, 2, rng);
    check_gradient(
        [&](const Var& table) {
            auto g = gather_rows(table, ids);
            auto c = concat_cols({g, constant(other)});
            return sum(pick(c, rows, cols));
        },
        random_matrix(4, 4, rng));
    check_gradient([&](const Var& x) { return sum(scale(take_rows(x, 1, 2), 3.0)); }, random_matrix(4, 2, rng));
    const Matrix base = random_matrix(2, 3, rng), row = random_matrix(1, 3, rng), w = random_matrix(2, 3, rng);
    check_gradient([&](const Var& r) { return weighted_sum(add_row(constant(base), r), w); }, row);
}

TEST(Autograd, NoGradGuardSkipsGraph) {
    auto x = parameter(Matrix::Ones(2, 2));
    NoGradGuard guard;
    auto y = sum(x);
    EXPECT_TRUE(y->parents.empty());
}

TEST(Adam, ZeroLearningRateLeavesParameters) {
    Rng rng(8);
    std::vector<Parameter> params = {{"w", parameter(random_matrix(3, 3, rng))}};
    const auto before = parameter_hash(params);
    Adam opt({0.0});
    backward(sum(params[0].var));
    opt.step(params);
    EXPECT_EQ(parameter_hash(params), before);
}

TEST(Adam, MinimizesQuadratic) {
    std::vector<Parameter> params = {{"w", parameter(Matrix::Constant(1, 3, 5.0))}};
    Adam opt({0.1});
    for (int i = 0; i < 500; ++i) {
        auto& w = params[0].var;
        backward(weighted_sum(w, w->value));  // d/dw (w.w) / 2 * 2
        opt.step(params);
    }
    EXPECT_LT(params[0].var->value.norm(), 0.1);
}

TEST(Adam, ClipReportsPreClipNorm) {
    std::vector<Parameter> params = {{"w", parameter(Matrix::Zero(1, 2))}};
    params[0].var->grad = Matrix::Constant(1, 2, 3.0);
    Adam opt({0.01});
    EXPECT_NEAR(opt.step(params), std::sqrt(18.0), 1e-12);
    EXPECT_EQ(params[0].var->grad.size() == 0 || params[0].var->grad.isZero(), true);
}

TEST(Parameters, SaveLoadRoundTrip) {
    Rng rng(9);
    std::vector<Parameter> a = {{"a", parameter(random_matrix(2, 3, rng))}, {"b", parameter(random_matrix(1, 4, rng))}};
    std::vector<Parameter> b = {{"a", parameter(Matrix::Zero(2, 3))}, {"b", parameter(Matrix::Zero(1, 4))}};
    const auto p = std::filesystem::temp_directory_path() / "ctxpara_nn_params.bin";
    save_parameters(p, a);
    load_parameters(p, b);
    EXPECT_EQ(parameter_hash(a), parameter_hash(b));
    std::vector<Parameter> wrong = {{"a", parameter(Matrix::Zero(3, 2))}, {"b", parameter(Matrix::Zero(1, 4))}};
    EXPECT_THROW(load_parameters(p, wrong), Error);
    std::filesystem::remove(p);
}

TEST(Parameters, HashSensitive) {
    std::vector<Parameter> a = {{"a", parameter(Matrix::Zero(2, 2))}};
    const auto h = parameter_hash(a);
    a[0].var->value(1, 1) = 1e-12;
    EXPECT_NE(parameter_hash(a), h);
}
