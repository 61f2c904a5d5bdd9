#include "ctxpara/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace ctxpara::nn {

namespace {

thread_local int g_no_grad_depth = 0;

Var make(Matrix value, std::vector<Var> parents, std::function<void(Node&)> bw) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool needs = false;
    if (g_no_grad_depth == 0) {
        for (const auto& p : parents) needs = needs || p->requires_grad;
    }
    if (needs) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward = std::move(bw);
    }
    return n;
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Var constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return n;
}

Var parameter(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

Var matmul(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.rows()) throw Error("matmul: shape mismatch");
    return make(a->value * b->value, {a, b}, [](Node& self) {
        auto& A = *self.parents[0];
        auto& B = *self.parents[1];
        if (A.requires_grad) A.accumulate(self.grad * B.value.transpose());
        if (B.requires_grad) B.accumulate(A.value.transpose() * self.grad);
    });
}

Var matmul_transposed(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.cols()) throw Error("matmul_transposed: shape mismatch");
    return make(a->value * b->value.transpose(), {a, b}, [](Node& self) {
        auto& A = *self.parents[0];
        auto& B = *self.parents[1];
        if (A.requires_grad) A.accumulate(self.grad * B.value);
        if (B.requires_grad) B.accumulate(self.grad.transpose() * A.value);
    });
}

Var add(const Var& a, const Var& b) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) throw Error("add: shape mismatch");
    return make(a->value + b->value, {a, b}, [](Node& self) {
        for (auto& p : self.parents)
            if (p->requires_grad) p->accumulate(self.grad);
    });
}

Var add_row(const Var& a, const Var& row) {
    if (row->value.rows() != 1 || row->value.cols() != a->value.cols()) throw Error("add_row: shape mismatch");
    Matrix out = a->value.rowwise() + row->value.row(0);
    return make(std::move(out), {a, row}, [](Node& self) {
        auto& A = *self.parents[0];
        auto& R = *self.parents[1];
        if (A.requires_grad) A.accumulate(self.grad);
        if (R.requires_grad) R.accumulate(self.grad.colwise().sum());
    });
}

Var scale(const Var& a, double s) {
    return make(a->value * s, {a}, [s](Node& self) { self.parents[0]->accumulate(self.grad * s); });
}

Var gelu(const Var& a) {
    static constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
    static constexpr double c = 0.044715;
    const Matrix& x = a->value;
    Matrix t = (k * (x.array() + c * x.array().cube())).tanh().matrix();
    Matrix y = (0.5 * x.array() * (1.0 + t.array())).matrix();
    return make(std::move(y), {a}, [t](Node& self) {
        const Matrix& x = self.parents[0]->value;
        Eigen::ArrayXXd dydx = 0.5 * (1.0 + t.array()) +
                               0.5 * x.array() * (1.0 - t.array().square()) * k * (1.0 + 3.0 * c * x.array().square());
        self.parents[0]->accumulate((self.grad.array() * dydx).matrix());
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const Matrix& X = x->value;
    const auto n = X.cols();
    Vector inv_std(X.rows());
    Matrix xhat(X.rows(), n);
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        const double mu = X.row(r).mean();
        const double var = (X.row(r).array() - mu).square().mean();
        inv_std(r) = 1.0 / std::sqrt(var + eps);
        xhat.row(r) = (X.row(r).array() - mu) * inv_std(r);
    }
    Matrix y = (xhat.array().rowwise() * gain->value.row(0).array()).matrix();
    y.rowwise() += bias->value.row(0);
    return make(std::move(y), {x, gain, bias}, [xhat, inv_std](Node& self) {
        auto& X = *self.parents[0];
        auto& G = *self.parents[1];
        auto& B = *self.parents[2];
        const Matrix& dy = self.grad;
        if (G.requires_grad) G.accumulate((dy.array() * xhat.array()).colwise().sum().matrix());
        if (B.requires_grad) B.accumulate(dy.colwise().sum());
        if (X.requires_grad) {
            Matrix dxhat = (dy.array().rowwise() * G.value.row(0).array()).matrix();
            Matrix dx(dy.rows(), dy.cols());
            for (Eigen::Index r = 0; r < dy.rows(); ++r) {
                const double m1 = dxhat.row(r).mean();
                const double m2 = (dxhat.row(r).array() * xhat.row(r).array()).mean();
                dx.row(r) = inv_std(r) * (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2);
            }
            X.accumulate(dx);
        }
    });
}

Var causal_softmax(const Var& scores) {
    const Matrix& S = scores->value;
    Matrix P = Matrix::Zero(S.rows(), S.cols());
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        const Eigen::Index len = std::min<Eigen::Index>(i + 1, S.cols());
        const double mx = S.row(i).head(len).maxCoeff();
        double z = 0.0;
        for (Eigen::Index j = 0; j < len; ++j) {
            P(i, j) = std::exp(S(i, j) - mx);
            z += P(i, j);
        }
        P.row(i).head(len) /= z;
    }
    return make(P, {scores}, [P](Node& self) {
        Matrix dS(P.rows(), P.cols());
        for (Eigen::Index i = 0; i < P.rows(); ++i) {
            const double dot = P.row(i).dot(self.grad.row(i));
            dS.row(i) = P.row(i).array() * (self.grad.row(i).array() - dot);
        }
        self.parents[0]->accumulate(dS);
    });
}

Var log_softmax_rows(const Var& a) {
    const Matrix& X = a->value;
    Matrix Y(X.rows(), X.cols());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double mx = X.row(i).maxCoeff();
        const double lse = mx + std::log((X.row(i).array() - mx).exp().sum());
        Y.row(i) = X.row(i).array() - lse;
    }
    return make(Y, {a}, [Y](Node& self) {
        Matrix dX = self.grad;
        for (Eigen::Index i = 0; i < Y.rows(); ++i) {
            const double s = self.grad.row(i).sum();
            dX.row(i) -= (Y.row(i).array().exp() * s).matrix();
        }
        self.parents[0]->accumulate(dX);
    });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
    const Matrix& T = table->value;
    Matrix out(static_cast<Eigen::Index>(ids.size()), T.cols());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] < 0 || ids[k] >= T.rows()) throw Error("gather_rows: id out of range");
        out.row(static_cast<Eigen::Index>(k)) = T.row(ids[k]);
    }
    std::vector<int> idx(ids.begin(), ids.end());
    return make(std::move(out), {table}, [idx](Node& self) {
        auto& T = *self.parents[0];
        Matrix g = Matrix::Zero(T.value.rows(), T.value.cols());
        for (std::size_t k = 0; k < idx.size(); ++k) g.row(idx[k]) += self.grad.row(static_cast<Eigen::Index>(k));
        T.accumulate(g);
    });
}

Var take_rows(const Var& a, int first, int count) {
    if (first < 0 || count < 0 || first + count > a->value.rows()) throw Error("take_rows: range out of bounds");
    Matrix out = a->value.middleRows(first, count);
    return make(std::move(out), {a}, [first, count](Node& self) {
        auto& A = *self.parents[0];
        Matrix g = Matrix::Zero(A.value.rows(), A.value.cols());
        g.middleRows(first, count) = self.grad;
        A.accumulate(g);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error("concat_cols: no inputs");
    Eigen::Index cols = 0;
    const auto rows = parts.front()->value.rows();
    for (const auto& p : parts) {
        if (p->value.rows() != rows) throw Error("concat_cols: row mismatch");
        cols += p->value.cols();
    }
    Matrix out(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        out.middleCols(at, p->value.cols()) = p->value;
        at += p->value.cols();
    }
    return make(std::move(out), parts, [](Node& self) {
        Eigen::Index at = 0;
        for (auto& p : self.parents) {
            const auto c = p->value.cols();
            if (p->requires_grad) p->accumulate(self.grad.middleCols(at, c));
            at += c;
        }
    });
}

Var pick(const Var& a, std::span<const int> rows, std::span<const int> cols) {
    if (rows.size() != cols.size()) throw Error("pick: index length mismatch");
    Matrix out(static_cast<Eigen::Index>(rows.size()), 1);
    for (std::size_t k = 0; k < rows.size(); ++k) out(static_cast<Eigen::Index>(k), 0) = a->value(rows[k], cols[k]);
    std::vector<int> r(rows.begin(), rows.end()), c(cols.begin(), cols.end());
    return make(std::move(out), {a}, [r, c](Node& self) {
        auto& A = *self.parents[0];
        Matrix g = Matrix::Zero(A.value.rows(), A.value.cols());
        for (std::size_t k = 0; k < r.size(); ++k) g(r[k], c[k]) += self.grad(static_cast<Eigen::Index>(k), 0);
        A.accumulate(g);
    });
}

Var weighted_sum(const Var& a, const Matrix& weights) {
    if (weights.rows() != a->value.rows() || weights.cols() != a->value.cols())
        throw Error("weighted_sum: shape mismatch");
    Matrix out(1, 1);
    out(0, 0) = (a->value.array() * weights.array()).sum();
    return make(std::move(out), {a}, [weights](Node& self) { self.parents[0]->accumulate(weights * self.grad(0, 0)); });
}

Var sum(const Var& a) {
    Matrix out(1, 1);
    out(0, 0) = a->value.sum();
    return make(std::move(out), {a}, [](Node& self) {
        auto& A = *self.parents[0];
        A.accumulate(Matrix::Constant(A.value.rows(), A.value.cols(), self.grad(0, 0)));
    });
}

void backward(const Var& root) {
    if (root->value.rows() != 1 || root->value.cols() != 1) throw Error("backward: root must be a scalar");
    if (!root->requires_grad) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() != 0) n->backward(*n);
    }
    // Release interior grads; leaves (parameters) keep theirs.
    for (Node* n : order) {
        if (n->backward) n->grad.resize(0, 0);
    }
}

void zero_grad(std::vector<Parameter>& params) {
    for (auto& p : params) p.var->grad.resize(0, 0);
}

double Adam::step(std::vector<Parameter>& params) {
    if (m_.empty()) {
        for (const auto& p : params) {
            m_.push_back(Matrix::Zero(p.var->value.rows(), p.var->value.cols()));
            v_.push_back(Matrix::Zero(p.var->value.rows(), p.var->value.cols()));
        }
    }
    if (m_.size() != params.size()) throw Error("Adam: parameter list changed between steps");
    double sq = 0.0;
    for (const auto& p : params) {
        if (p.var->grad.size() != 0) sq += p.var->grad.squaredNorm();
    }
    const double norm = std::sqrt(sq);
    double clip = 1.0;
    if (options_.grad_clip > 0.0 && norm > options_.grad_clip) clip = options_.grad_clip / norm;
    ++t_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& node = *params[i].var;
        if (node.grad.size() == 0) continue;
        const Matrix g = node.grad * clip;
        m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
        v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseProduct(g);
        if (options_.learning_rate != 0.0) {
            node.value.array() -= options_.learning_rate * (m_[i].array() / bc1) /
                                  ((v_[i].array() / bc2).sqrt() + options_.eps);
        }
    }
    zero_grad(params);
    return norm;
}

std::uint64_t parameter_hash(const std::vector<Parameter>& params) {
    std::uint64_t h = 14695981039346656037ULL;
    for (const auto& p : params) {
        const auto& m = p.var->value;
        std::string_view bytes(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
        h = splitmix64(h ^ fnv1a64(bytes) ^ fnv1a64(p.name));
    }
    return h;
}

namespace {
constexpr char kMagic[8] = {'C', 'T', 'X', 'P', 'N', 'N', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw Error("parameter blob truncated");
    return v;
}
}  // namespace

void save_parameters(const std::filesystem::path& path, const std::vector<Parameter>& params) {
    std::ostringstream out(std::ios::binary);
    out.write(kMagic, sizeof(kMagic));
    write_pod<std::uint64_t>(out, params.size());
    for (const auto& p : params) {
        const auto& m = p.var->value;
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
        write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<double>(out, m(r, c));
    }
    write_file_atomic(path, out.str());
}

void load_parameters(const std::filesystem::path& path, std::vector<Parameter>& params) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw Error("not a parameter blob: " + path.string());
    const auto count = read_pod<std::uint64_t>(in);
    if (count != params.size())
        throw Error("parameter count mismatch in " + path.string() + ": file has " + std::to_string(count) +
                    ", model has " + std::to_string(params.size()));
    for (auto& p : params) {
        const auto rows = read_pod<std::uint64_t>(in);
        const auto cols = read_pod<std::uint64_t>(in);
        auto& m = p.var->value;
        if (static_cast<Eigen::Index>(rows) != m.rows() || static_cast<Eigen::Index>(cols) != m.cols())
            throw Error("shape mismatch for parameter '" + p.name + "' in " + path.string());
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = read_pod<double>(in);
    }
}

}  // namespace ctxpara::nn
