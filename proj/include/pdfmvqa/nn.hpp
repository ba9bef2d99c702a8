// Dense tensor math with reverse-mode autodiff, plus the transformer layers
// and optimizer used by the retriever. Double precision throughout; all
// randomness flows through explicitly seeded generators, so identical seeds
// give identical parameters, losses and gradients on any platform.
#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdfmvqa::nn {

using Scalar = double;

struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<Scalar> data;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

    static Tensor zeros(int r, int c) { return Tensor(r, c); }

    Scalar& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    Scalar at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (Scalar v : data) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor m, v;  // first/second moment state
};

// Non-owning, registration-ordered registry; the order defines both the
// optimizer walk and the checkpoint layout.
class ParamStore {
  public:
    void add(Param* p) {
        if (by_name_.count(p->name)) {
            throw std::invalid_argument("duplicate parameter name " + p->name);
        }
        by_name_[p->name] = p;
        params_.push_back(p);
    }

    const std::vector<Param*>& all() const { return params_; }

    Param* find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? nullptr : it->second;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Param* p : params_) n += p->value.size();
        return n;
    }

    void zero_grads() {
        for (Param* p : params_) {
            p->grad = Tensor::zeros(p->value.rows, p->value.cols);
        }
    }

  private:
    std::vector<Param*> params_;
    std::map<std::string, Param*> by_name_;
};

struct Initializer {
    std::mt19937_64 rng;
    Scalar stddev = 0.02;

    explicit Initializer(std::uint64_t seed, Scalar sd = 0.02) : rng(seed), stddev(sd) {}

    Tensor normal(int r, int c) {
        std::normal_distribution<Scalar> dist(0.0, stddev);
        Tensor t(r, c);
        for (Scalar& v : t.data) v = dist(rng);
        return t;
    }

    Tensor constant(int r, int c, Scalar fill) {
        Tensor t(r, c);
        for (Scalar& v : t.data) v = fill;
        return t;
    }
};

// ---------------------------------------------------------------------------
// Autodiff graph
// ---------------------------------------------------------------------------

using Mask = std::vector<unsigned char>;  // 1 = position participates

class Graph {
  public:
    using Id = int;

    Id constant(Tensor t) { return push(std::move(t), {}, nullptr, nullptr); }

    Id param(Param& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return it->second;
        Id id = push(p.value, {}, nullptr, &p);
        param_nodes_[&p] = id;
        return id;
    }

    const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor& grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    Id add(Id a, Id b) {
        const Tensor& ta = value(a);
        const Tensor& tb = value(b);
        if (!ta.same_shape(tb)) throw std::invalid_argument("add: shape mismatch");
        Tensor out = ta;
        for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += tb.data[i];
        return push(std::move(out), {a, b}, [](Graph& g, Node& n) {
            for (std::size_t i = 0; i < n.value.size(); ++i) {
                g.node(n.parents[0]).grad.data[i] += n.grad.data[i];
                g.node(n.parents[1]).grad.data[i] += n.grad.data[i];
            }
        });
    }

    // a (n,c) + v (1,c) broadcast over rows.
    Id add_rowvec(Id a, Id v) {
        const Tensor& ta = value(a);
        const Tensor& tv = value(v);
        if (tv.rows != 1 || tv.cols != ta.cols) {
            throw std::invalid_argument("add_rowvec: shape mismatch");
        }
        Tensor out = ta;
        for (int r = 0; r < ta.rows; ++r) {
            for (int c = 0; c < ta.cols; ++c) out.at(r, c) += tv.at(0, c);
        }
        return push(std::move(out), {a, v}, [](Graph& g, Node& n) {
            Tensor& ga = g.node(n.parents[0]).grad;
            Tensor& gv = g.node(n.parents[1]).grad;
            for (int r = 0; r < n.grad.rows; ++r) {
                for (int c = 0; c < n.grad.cols; ++c) {
                    ga.at(r, c) += n.grad.at(r, c);
                    gv.at(0, c) += n.grad.at(r, c);
                }
            }
        });
    }

    Id scale(Id a, Scalar s) {
        Tensor out = value(a);
        for (Scalar& x : out.data) x *= s;
        return push(std::move(out), {a}, [s](Graph& g, Node& n) {
            Tensor& ga = g.node(n.parents[0]).grad;
            for (std::size_t i = 0; i < n.grad.size(); ++i) ga.data[i] += s * n.grad.data[i];
        });
    }

    // (n,k) x (k,m) -> (n,m)
    Id matmul(Id a, Id b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.cols != B.rows) throw std::invalid_argument("matmul: inner dimension mismatch");
        Tensor out(A.rows, B.cols);
        for (int i = 0; i < A.rows; ++i) {
            for (int k = 0; k < A.cols; ++k) {
                Scalar aik = A.at(i, k);
                if (aik == 0.0) continue;
                for (int j = 0; j < B.cols; ++j) out.at(i, j) += aik * B.at(k, j);
            }
        }
        return push(std::move(out), {a, b}, [](Graph& g, Node& n) {
            const Tensor& A = g.value(n.parents[0]);
            const Tensor& B = g.value(n.parents[1]);
            Tensor& gA = g.node(n.parents[0]).grad;
            Tensor& gB = g.node(n.parents[1]).grad;
            // gA += gC * B^T
            for (int i = 0; i < A.rows; ++i) {
                for (int j = 0; j < B.cols; ++j) {
                    Scalar gij = n.grad.at(i, j);
                    if (gij == 0.0) continue;
                    for (int k = 0; k < A.cols; ++k) gA.at(i, k) += gij * B.at(k, j);
                }
            }
            // gB += A^T * gC
            for (int k = 0; k < A.cols; ++k) {
                for (int i = 0; i < A.rows; ++i) {
                    Scalar aik = A.at(i, k);
                    if (aik == 0.0) continue;
                    for (int j = 0; j < B.cols; ++j) gB.at(k, j) += aik * n.grad.at(i, j);
                }
            }
        });
    }

    // (n,k) x (m,k)^T -> (n,m)
    Id matmul_nt(Id a, Id b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.cols != B.cols) throw std::invalid_argument("matmul_nt: inner dimension mismatch");
        Tensor out(A.rows, B.rows);
        for (int i = 0; i < A.rows; ++i) {
            for (int j = 0; j < B.rows; ++j) {
                Scalar s = 0;
                for (int k = 0; k < A.cols; ++k) s += A.at(i, k) * B.at(j, k);
                out.at(i, j) = s;
            }
        }
        return push(std::move(out), {a, b}, [](Graph& g, Node& n) {
            const Tensor& A = g.value(n.parents[0]);
            const Tensor& B = g.value(n.parents[1]);
            Tensor& gA = g.node(n.parents[0]).grad;
            Tensor& gB = g.node(n.parents[1]).grad;
            for (int i = 0; i < A.rows; ++i) {
                for (int j = 0; j < B.rows; ++j) {
                    Scalar gij = n.grad.at(i, j);
                    if (gij == 0.0) continue;
                    for (int k = 0; k < A.cols; ++k) {
                        gA.at(i, k) += gij * B.at(j, k);
                        gB.at(j, k) += gij * A.at(i, k);
                    }
                }
            }
        });
    }

    Id relu(Id a) {
        Tensor out = value(a);
        for (Scalar& v : out.data) v = v > 0 ? v : 0;
        return push(std::move(out), {a}, [](Graph& g, Node& n) {
            const Tensor& A = g.value(n.parents[0]);
            Tensor& gA = g.node(n.parents[0]).grad;
            for (std::size_t i = 0; i < A.size(); ++i) {
                if (A.data[i] > 0) gA.data[i] += n.grad.data[i];
            }
        });
    }

    Id concat_rows(const std::vector<Id>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
        int cols = value(parts[0]).cols;
        int rows = 0;
        for (Id p : parts) {
            if (value(p).cols != cols) throw std::invalid_argument("concat_rows: column mismatch");
            rows += value(p).rows;
        }
        Tensor out(rows, cols);
        int r0 = 0;
        for (Id p : parts) {
            const Tensor& t = value(p);
            std::copy(t.data.begin(), t.data.end(),
                      out.data.begin() + static_cast<std::ptrdiff_t>(r0) * cols);
            r0 += t.rows;
        }
        return push(std::move(out), parts, [](Graph& g, Node& n) {
            int r0 = 0;
            for (Id p : n.parents) {
                Tensor& gp = g.node(p).grad;
                for (int r = 0; r < gp.rows; ++r) {
                    for (int c = 0; c < gp.cols; ++c) gp.at(r, c) += n.grad.at(r0 + r, c);
                }
                r0 += gp.rows;
            }
        });
    }

    Id concat_cols(const std::vector<Id>& parts) {
        if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
        int rows = value(parts[0]).rows;
        int cols = 0;
        for (Id p : parts) {
            if (value(p).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
            cols += value(p).cols;
        }
        Tensor out(rows, cols);
        int c0 = 0;
        for (Id p : parts) {
            const Tensor& t = value(p);
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < t.cols; ++c) out.at(r, c0 + c) = t.at(r, c);
            }
            c0 += t.cols;
        }
        return push(std::move(out), parts, [](Graph& g, Node& n) {
            int c0 = 0;
            for (Id p : n.parents) {
                Tensor& gp = g.node(p).grad;
                for (int r = 0; r < gp.rows; ++r) {
                    for (int c = 0; c < gp.cols; ++c) gp.at(r, c) += n.grad.at(r, c0 + c);
                }
                c0 += gp.cols;
            }
        });
    }

    Id slice_rows(Id a, int begin, int count) {
        const Tensor& A = value(a);
        if (begin < 0 || begin + count > A.rows) throw std::out_of_range("slice_rows");
        Tensor out(count, A.cols);
        for (int r = 0; r < count; ++r) {
            for (int c = 0; c < A.cols; ++c) out.at(r, c) = A.at(begin + r, c);
        }
        return push(std::move(out), {a}, [begin](Graph& g, Node& n) {
            Tensor& gA = g.node(n.parents[0]).grad;
            for (int r = 0; r < n.grad.rows; ++r) {
                for (int c = 0; c < n.grad.cols; ++c) gA.at(begin + r, c) += n.grad.at(r, c);
            }
        });
    }

    Id slice_cols(Id a, int begin, int count) {
        const Tensor& A = value(a);
        if (begin < 0 || begin + count > A.cols) throw std::out_of_range("slice_cols");
        Tensor out(A.rows, count);
        for (int r = 0; r < A.rows; ++r) {
            for (int c = 0; c < count; ++c) out.at(r, c) = A.at(r, begin + c);
        }
        return push(std::move(out), {a}, [begin](Graph& g, Node& n) {
            Tensor& gA = g.node(n.parents[0]).grad;
            for (int r = 0; r < n.grad.rows; ++r) {
                for (int c = 0; c < n.grad.cols; ++c) gA.at(r, begin + c) += n.grad.at(r, c);
            }
        });
    }

    // Row-wise layer norm with affine parameters; `enabled` false bypasses
    // the whole op (test-mode ablation).
    Id layer_norm(Id x, Id gamma, Id beta, bool enabled, Scalar eps = 1e-5) {
        if (!enabled) return x;
        const Tensor& X = value(x);
        const Tensor& G = value(gamma);
        const Tensor& B = value(beta);
        if (G.cols != X.cols || B.cols != X.cols) {
            throw std::invalid_argument("layer_norm: affine shape mismatch");
        }
        Tensor out(X.rows, X.cols);
        Tensor xhat(X.rows, X.cols);
        std::vector<Scalar> inv_std(static_cast<std::size_t>(X.rows));
        for (int r = 0; r < X.rows; ++r) {
            Scalar mean = 0;
            for (int c = 0; c < X.cols; ++c) mean += X.at(r, c);
            mean /= X.cols;
            Scalar var = 0;
            for (int c = 0; c < X.cols; ++c) {
                Scalar d = X.at(r, c) - mean;
                var += d * d;
            }
            var /= X.cols;
            Scalar is = 1.0 / std::sqrt(var + eps);
            inv_std[static_cast<std::size_t>(r)] = is;
            for (int c = 0; c < X.cols; ++c) {
                Scalar xh = (X.at(r, c) - mean) * is;
                xhat.at(r, c) = xh;
                out.at(r, c) = G.at(0, c) * xh + B.at(0, c);
            }
        }
        auto xhat_ptr = std::make_shared<Tensor>(std::move(xhat));
        auto inv_ptr = std::make_shared<std::vector<Scalar>>(std::move(inv_std));
        return push(std::move(out), {x, gamma, beta},
                    [xhat_ptr, inv_ptr](Graph& g, Node& n) {
                        const Tensor& G = g.value(n.parents[1]);
                        Tensor& gX = g.node(n.parents[0]).grad;
                        Tensor& gG = g.node(n.parents[1]).grad;
                        Tensor& gB = g.node(n.parents[2]).grad;
                        const Tensor& xh = *xhat_ptr;
                        int cols = n.grad.cols;
                        for (int r = 0; r < n.grad.rows; ++r) {
                            Scalar sum_dy = 0, sum_dy_xh = 0;
                            for (int c = 0; c < cols; ++c) {
                                Scalar dy = n.grad.at(r, c) * G.at(0, c);
                                sum_dy += dy;
                                sum_dy_xh += dy * xh.at(r, c);
                                gG.at(0, c) += n.grad.at(r, c) * xh.at(r, c);
                                gB.at(0, c) += n.grad.at(r, c);
                            }
                            Scalar is = (*inv_ptr)[static_cast<std::size_t>(r)];
                            for (int c = 0; c < cols; ++c) {
                                Scalar dy = n.grad.at(r, c) * G.at(0, c);
                                gX.at(r, c) += is * (dy - sum_dy / cols -
                                                     xh.at(r, c) * sum_dy_xh / cols);
                            }
                        }
                    });
    }

    // Row-wise softmax; masked-out key columns get exactly zero probability.
    Id softmax_rows(Id a, const Mask* key_mask = nullptr) {
        const Tensor& A = value(a);
        if (key_mask && static_cast<int>(key_mask->size()) != A.cols) {
            throw std::invalid_argument("softmax_rows: mask length mismatch");
        }
        Tensor out(A.rows, A.cols);
        for (int r = 0; r < A.rows; ++r) {
            Scalar mx = -1e308;
            bool any = false;
            for (int c = 0; c < A.cols; ++c) {
                if (key_mask && !(*key_mask)[static_cast<std::size_t>(c)]) continue;
                mx = std::max(mx, A.at(r, c));
                any = true;
            }
            if (!any) throw std::invalid_argument("softmax_rows: fully masked row");
            Scalar denom = 0;
            for (int c = 0; c < A.cols; ++c) {
                if (key_mask && !(*key_mask)[static_cast<std::size_t>(c)]) continue;
                denom += std::exp(A.at(r, c) - mx);
            }
            for (int c = 0; c < A.cols; ++c) {
                bool live = !key_mask || (*key_mask)[static_cast<std::size_t>(c)];
                out.at(r, c) = live ? std::exp(A.at(r, c) - mx) / denom : 0.0;
            }
        }
        return push(std::move(out), {a}, [](Graph& g, Node& n) {
            Tensor& gA = g.node(n.parents[0]).grad;
            for (int r = 0; r < n.value.rows; ++r) {
                Scalar dot = 0;
                for (int c = 0; c < n.value.cols; ++c) {
                    dot += n.grad.at(r, c) * n.value.at(r, c);
                }
                for (int c = 0; c < n.value.cols; ++c) {
                    gA.at(r, c) += n.value.at(r, c) * (n.grad.at(r, c) - dot);
                }
            }
        });
    }

    Id mean_rows(Id a) {
        const Tensor& A = value(a);
        if (A.rows == 0) throw std::invalid_argument("mean_rows: empty");
        Tensor out(1, A.cols);
        for (int r = 0; r < A.rows; ++r) {
            for (int c = 0; c < A.cols; ++c) out.at(0, c) += A.at(r, c);
        }
        for (Scalar& v : out.data) v /= A.rows;
        return push(std::move(out), {a}, [](Graph& g, Node& n) {
            Tensor& gA = g.node(n.parents[0]).grad;
            for (int r = 0; r < gA.rows; ++r) {
                for (int c = 0; c < gA.cols; ++c) gA.at(r, c) += n.grad.at(0, c) / gA.rows;
            }
        });
    }

    // Summed 2-class cross entropy over masked rows; divide by the mask
    // count outside when a mean is wanted. Labels are 0/1 per row.
    Id ce2_sum(Id logits, const std::vector<int>& labels, const Mask& mask) {
        const Tensor& L = value(logits);
        if (L.cols != 2) throw std::invalid_argument("ce2_sum: logits must have 2 columns");
        if (static_cast<int>(labels.size()) != L.rows ||
            static_cast<int>(mask.size()) != L.rows) {
            throw std::invalid_argument("ce2_sum: label/mask length mismatch");
        }
        Scalar total = 0;
        int counted = 0;
        for (int r = 0; r < L.rows; ++r) {
            if (!mask[static_cast<std::size_t>(r)]) continue;
            ++counted;
            Scalar a = L.at(r, 0), b = L.at(r, 1);
            Scalar mx = std::max(a, b);
            Scalar lse = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
            total += lse - (labels[static_cast<std::size_t>(r)] == 1 ? b : a);
        }
        if (counted == 0) throw std::invalid_argument("ce2_sum: all rows masked out");
        Tensor out(1, 1);
        out.at(0, 0) = total;
        auto labels_copy = std::make_shared<std::vector<int>>(labels);
        auto mask_copy = std::make_shared<Mask>(mask);
        return push(std::move(out), {logits}, [labels_copy, mask_copy](Graph& g, Node& n) {
            const Tensor& L = g.value(n.parents[0]);
            Tensor& gL = g.node(n.parents[0]).grad;
            Scalar up = n.grad.at(0, 0);
            for (int r = 0; r < L.rows; ++r) {
                if (!(*mask_copy)[static_cast<std::size_t>(r)]) continue;
                Scalar a = L.at(r, 0), b = L.at(r, 1);
                Scalar mx = std::max(a, b);
                Scalar ea = std::exp(a - mx), eb = std::exp(b - mx);
                Scalar pa = ea / (ea + eb), pb = eb / (ea + eb);
                int label = (*labels_copy)[static_cast<std::size_t>(r)];
                gL.at(r, 0) += up * (pa - (label == 0 ? 1.0 : 0.0));
                gL.at(r, 1) += up * (pb - (label == 1 ? 1.0 : 0.0));
            }
        });
    }

    // Reverse pass from a scalar node; accumulates into bound Param::grad.
    void backward(Id loss) {
        Node& last = node(loss);
        if (last.value.rows != 1 || last.value.cols != 1) {
            throw std::invalid_argument("backward: loss must be scalar");
        }
        last.grad.at(0, 0) = 1.0;
        for (int i = loss; i >= 0; --i) {
            Node& n = node(i);
            if (n.back) n.back(*this, n);
        }
        for (auto& [p, id] : param_nodes_) {
            const Tensor& g = node(id).grad;
            if (p->grad.size() != g.size()) p->grad = Tensor::zeros(g.rows, g.cols);
            for (std::size_t i = 0; i < g.size(); ++i) p->grad.data[i] += g.data[i];
        }
    }

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<Id> parents;
        std::function<void(Graph&, Node&)> back;
        Param* bound = nullptr;
    };

    Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }

    Id push(Tensor value, std::vector<Id> parents, std::function<void(Graph&, Node&)> back,
            Param* bound = nullptr) {
        Node n;
        n.grad = Tensor::zeros(value.rows, value.cols);
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.back = std::move(back);
        n.bound = bound;
        nodes_.push_back(std::move(n));
        return static_cast<Id>(nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::map<Param*, Id> param_nodes_;
};

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

struct Linear {
    Param w;  // (in, out)
    Param b;  // (1, out)

    void init(ParamStore& store, const std::string& name, int in, int out, Initializer& ini) {
        w.name = name + ".w";
        w.value = ini.normal(in, out);
        b.name = name + ".b";
        b.value = Tensor::zeros(1, out);
        store.add(&w);
        store.add(&b);
    }

    Graph::Id apply(Graph& g, Graph::Id x) const {
        return g.add_rowvec(g.matmul(x, g.param(const_cast<Param&>(w))),
                            g.param(const_cast<Param&>(b)));
    }
};

struct LayerNorm {
    Param gamma, beta;

    void init(ParamStore& store, const std::string& name, int dim, Initializer& ini) {
        gamma.name = name + ".gamma";
        gamma.value = ini.constant(1, dim, 1.0);
        beta.name = name + ".beta";
        beta.value = Tensor::zeros(1, dim);
        store.add(&gamma);
        store.add(&beta);
    }

    Graph::Id apply(Graph& g, Graph::Id x, bool enabled) const {
        return g.layer_norm(x, g.param(const_cast<Param&>(gamma)),
                            g.param(const_cast<Param&>(beta)), enabled);
    }
};

struct MultiHeadAttention {
    int heads = 1;
    int dim = 0;
    Linear wq, wk, wv, wo;

    void init(ParamStore& store, const std::string& name, int d, int h, Initializer& ini) {
        if (d % h != 0) throw std::invalid_argument("hidden must be divisible by heads");
        heads = h;
        dim = d;
        wq.init(store, name + ".wq", d, d, ini);
        wk.init(store, name + ".wk", d, d, ini);
        wv.init(store, name + ".wv", d, d, ini);
        wo.init(store, name + ".wo", d, d, ini);
    }

    // q_in (n,d) attends over kv_in (m,d); key_mask hides padded keys.
    Graph::Id apply(Graph& g, Graph::Id q_in, Graph::Id kv_in,
                    const Mask* key_mask = nullptr) const {
        Graph::Id q = wq.apply(g, q_in);
        Graph::Id k = wk.apply(g, kv_in);
        Graph::Id v = wv.apply(g, kv_in);
        int dh = dim / heads;
        Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(dh));
        std::vector<Graph::Id> head_outputs;
        for (int h = 0; h < heads; ++h) {
            Graph::Id qh = g.slice_cols(q, h * dh, dh);
            Graph::Id kh = g.slice_cols(k, h * dh, dh);
            Graph::Id vh = g.slice_cols(v, h * dh, dh);
            Graph::Id scores = g.scale(g.matmul_nt(qh, kh), scale);
            Graph::Id attn = g.softmax_rows(scores, key_mask);
            head_outputs.push_back(g.matmul(attn, vh));
        }
        return wo.apply(g, g.concat_cols(head_outputs));
    }
};

struct FeedForward {
    Linear fc1, fc2;

    void init(ParamStore& store, const std::string& name, int dim, int hidden,
              Initializer& ini) {
        fc1.init(store, name + ".fc1", dim, hidden, ini);
        fc2.init(store, name + ".fc2", hidden, dim, ini);
    }

    Graph::Id apply(Graph& g, Graph::Id x) const { return fc2.apply(g, g.relu(fc1.apply(g, x))); }
};

// Pre-norm encoder layer: x = x + Attn(LN(x)); x = x + FFN(LN(x)).
// Zero-initialized sublayers make the block an exact identity.
struct EncoderLayer {
    MultiHeadAttention attn;
    FeedForward ff;
    LayerNorm ln1, ln2;

    void init(ParamStore& store, const std::string& name, int dim, int heads, int ffn,
              Initializer& ini) {
        attn.init(store, name + ".attn", dim, heads, ini);
        ff.init(store, name + ".ff", dim, ffn, ini);
        ln1.init(store, name + ".ln1", dim, ini);
        ln2.init(store, name + ".ln2", dim, ini);
    }

    Graph::Id apply(Graph& g, Graph::Id x, const Mask* mask, bool norm) const {
        Graph::Id n1 = ln1.apply(g, x, norm);
        x = g.add(x, attn.apply(g, n1, n1, mask));
        x = g.add(x, ff.apply(g, ln2.apply(g, x, norm)));
        return x;
    }
};

struct DecoderLayer {
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ff;
    LayerNorm ln1, ln2, ln3;

    void init(ParamStore& store, const std::string& name, int dim, int heads, int ffn,
              Initializer& ini) {
        self_attn.init(store, name + ".self", dim, heads, ini);
        cross_attn.init(store, name + ".cross", dim, heads, ini);
        ff.init(store, name + ".ff", dim, ffn, ini);
        ln1.init(store, name + ".ln1", dim, ini);
        ln2.init(store, name + ".ln2", dim, ini);
        ln3.init(store, name + ".ln3", dim, ini);
    }

    Graph::Id apply(Graph& g, Graph::Id x, Graph::Id memory, const Mask* self_mask,
                    const Mask* memory_mask, bool norm) const {
        Graph::Id n1 = ln1.apply(g, x, norm);
        x = g.add(x, self_attn.apply(g, n1, n1, self_mask));
        x = g.add(x, cross_attn.apply(g, ln2.apply(g, x, norm), memory, memory_mask));
        x = g.add(x, ff.apply(g, ln3.apply(g, x, norm)));
        return x;
    }
};

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

struct AdamConfig {
    Scalar lr = 2e-5;
    Scalar beta1 = 0.9;
    Scalar beta2 = 0.999;
    Scalar eps = 1e-8;
};

class Adam {
  public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void step(ParamStore& store) {
        ++t_;
        Scalar bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<Scalar>(t_));
        Scalar bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<Scalar>(t_));
        for (Param* p : store.all()) {
            if (p->grad.size() != p->value.size()) continue;  // never touched
            if (p->m.size() != p->value.size()) {
                p->m = Tensor::zeros(p->value.rows, p->value.cols);
                p->v = Tensor::zeros(p->value.rows, p->value.cols);
            }
            for (std::size_t i = 0; i < p->value.size(); ++i) {
                Scalar gr = p->grad.data[i];
                p->m.data[i] = cfg_.beta1 * p->m.data[i] + (1 - cfg_.beta1) * gr;
                p->v.data[i] = cfg_.beta2 * p->v.data[i] + (1 - cfg_.beta2) * gr * gr;
                Scalar mhat = p->m.data[i] / bc1;
                Scalar vhat = p->v.data[i] / bc2;
                p->value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
        store.zero_grads();
    }

    long step_count() const { return t_; }

  private:
    AdamConfig cfg_;
    long t_ = 0;
};

}  // namespace pdfmvqa::nn
