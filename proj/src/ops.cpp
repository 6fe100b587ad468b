#include "syncmask/ops.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "syncmask/kernels.hpp"

namespace syncmask {

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                                shape_string(b));
}

void require_same_shape(const char* op, const Var& a, const Var& b) {
    if (a.shape() != b.shape()) {
        shape_error(op, a.shape(), b.shape());
    }
}

void add_into(Tensor* dst, const Tensor& src) {
    if (!dst) {
        return;
    }
    auto d = dst->data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        d[i] += s[i];
    }
}

template <class F>
Tensor map(const Tensor& x, F f) {
    Tensor out(x.shape());
    auto o = out.data();
    auto in = x.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = f(in[i]);
    }
    return out;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
    const int m = a.rows();
    const int k = a.cols();
    const int n = b.cols();
    if (b.rows() != k) {
        shape_error("matmul", a.shape(), b.shape());
    }
    Tensor out({m, n});
    kernels::gemm(a.value().data(), b.value().data(), out.data(), m, k, n, false);
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->emit(std::move(out), {a, b}, "matmul", [=](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_slot(ia)) {
            // dA = dC * B^T
            kernels::gemm_nt(g.data(), t.value(ib).data(), ga->data(), m, n, k, true);
        }
        if (Tensor* gb = t.grad_slot(ib)) {
            // dB = A^T * dC
            kernels::gemm_tn(t.value(ia).data(), g.data(), gb->data(), k, m, n, true);
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    const int m = a.rows();
    const int k = a.cols();
    const int n = b.rows();
    if (b.cols() != k) {
        shape_error("matmul_nt", a.shape(), b.shape());
    }
    Tensor out({m, n});
    kernels::gemm_nt(a.value().data(), b.value().data(), out.data(), m, k, n, false);
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->emit(std::move(out), {a, b}, "matmul_nt", [=](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_slot(ia)) {
            // dA = dC * B
            kernels::gemm(g.data(), t.value(ib).data(), ga->data(), m, n, k, true);
        }
        if (Tensor* gb = t.grad_slot(ib)) {
            // dB = dC^T * A
            kernels::gemm_tn(g.data(), t.value(ia).data(), gb->data(), n, m, k, true);
        }
    });
}

Var transpose(const Var& a) {
    const int ia = a.id();
    return a.tape()->emit(transpose(a.value()), {a}, "transpose", [=](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_slot(ia)) {
            add_into(ga, transpose(g));
        }
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape("add", a, b);
    Tensor out = a.value();
    add_into(&out, b.value());
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->emit(std::move(out), {a, b}, "add", [=](Tape& t, const Tensor& g) {
        add_into(t.grad_slot(ia), g);
        add_into(t.grad_slot(ib), g);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape("sub", a, b);
    Tensor out = a.value();
    {
        auto o = out.data();
        auto bv = b.value().data();
        for (std::size_t i = 0; i < o.size(); ++i) {
            o[i] -= bv[i];
        }
    }
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->emit(std::move(out), {a, b}, "sub", [=](Tape& t, const Tensor& g) {
        add_into(t.grad_slot(ia), g);
        if (Tensor* gb = t.grad_slot(ib)) {
            auto d = gb->data();
            auto s = g.data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] -= s[i];
            }
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape("mul", a, b);
    Tensor out = a.value();
    {
        auto o = out.data();
        auto bv = b.value().data();
        for (std::size_t i = 0; i < o.size(); ++i) {
            o[i] *= bv[i];
        }
    }
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->emit(std::move(out), {a, b}, "mul", [=](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_slot(ia)) {
            auto d = ga->data();
            auto bv = t.value(ib).data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] += g[i] * bv[i];
            }
        }
        if (Tensor* gb = t.grad_slot(ib)) {
            auto d = gb->data();
            auto av = t.value(ia).data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] += g[i] * av[i];
            }
        }
    });
}

Var scale(const Var& a, double factor) {
    const int ia = a.id();
    return a.tape()->emit(map(a.value(), [=](double v) { return v * factor; }), {a}, "scale",
                          [=](Tape& t, const Tensor& g) {
                              if (Tensor* ga = t.grad_slot(ia)) {
                                  auto d = ga->data();
                                  for (std::size_t i = 0; i < d.size(); ++i) {
                                      d[i] += g[i] * factor;
                                  }
                              }
                          });
}

Var add_row(const Var& a, const Var& row) {
    const int m = a.rows();
    const int n = a.cols();
    if (row.value().size() != static_cast<std::size_t>(n)) {
        shape_error("add_row", a.shape(), row.shape());
    }
    Tensor out = a.value();
    const auto& rv = row.value();
    for (int i = 0; i < m; ++i) {
        auto r = out.row(i);
        for (int j = 0; j < n; ++j) {
            r[j] += rv[j];
        }
    }
    const int ia = a.id();
    const int ir = row.id();
    return a.tape()->emit(std::move(out), {a, row}, "add_row", [=](Tape& t, const Tensor& g) {
        add_into(t.grad_slot(ia), g);
        if (Tensor* gr = t.grad_slot(ir)) {
            for (int i = 0; i < m; ++i) {
                auto gi = g.row(i);
                for (int j = 0; j < n; ++j) {
                    (*gr)[j] += gi[j];
                }
            }
        }
    });
}

Var mul_scalar(const Var& a, const Var& s) {
    if (s.value().size() != 1) {
        shape_error("mul_scalar", a.shape(), s.shape());
    }
    const double sv = s.value()[0];
    const int ia = a.id();
    const int is = s.id();
    return a.tape()->emit(map(a.value(), [=](double v) { return v * sv; }), {a, s}, "mul_scalar",
                          [=](Tape& t, const Tensor& g) {
                              if (Tensor* ga = t.grad_slot(ia)) {
                                  auto d = ga->data();
                                  for (std::size_t i = 0; i < d.size(); ++i) {
                                      d[i] += g[i] * sv;
                                  }
                              }
                              if (Tensor* gs = t.grad_slot(is)) {
                                  auto av = t.value(ia).data();
                                  double acc = 0.0;
                                  for (std::size_t i = 0; i < av.size(); ++i) {
                                      acc += g[i] * av[i];
                                  }
                                  (*gs)[0] += acc;
                              }
                          });
}

Var exp(const Var& a) {
    const int ia = a.id();
    Tensor out = map(a.value(), [](double v) { return std::exp(v); });
    const int io = static_cast<int>(a.tape()->node_count());  // id the output will receive
    return a.tape()->emit(std::move(out), {a}, "exp", [=](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_slot(ia)) {
            auto y = t.value(io).data();
            auto d = ga->data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] += g[i] * y[i];
            }
        }
    });
}

Var reciprocal(const Var& a) {
    const int ia = a.id();
    Tensor out = map(a.value(), [](double v) {
        if (v == 0.0) {
            throw std::domain_error("reciprocal: division by zero");
        }
        return 1.0 / v;
    });
    return a.tape()->emit(std::move(out), {a}, "reciprocal", [=](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_slot(ia)) {
            auto x = t.value(ia).data();
            auto d = ga->data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                d[i] -= g[i] / (x[i] * x[i]);
            }
        }
    });
}

Var gelu(const Var& a) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    const int ia = a.id();
    Tensor out = map(a.value(), [](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
    return a.tape()->emit(std::move(out), {a}, "gelu", [=](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_slot(ia)) {
            auto x = t.value(ia).data();
            auto d = ga->data();
            for (std::size_t i = 0; i < d.size(); ++i) {
                const double cdf = 0.5 * (1.0 + std::erf(x[i] * inv_sqrt2));
                const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x[i] * x[i]);
                d[i] += g[i] * (cdf + x[i] * pdf);
            }
        }
    });
}

Var softmax_rows(const Var& x) {
    const int m = x.rows();
    const int n = x.cols();
    Tensor out(x.shape());
    kernels::softmax_rows(x.value().data(), out.data(), m, n);
    const int ix = x.id();
    const int io = static_cast<int>(x.tape()->node_count());
    return x.tape()->emit(std::move(out), {x}, "softmax_rows", [=](Tape& t, const Tensor& g) {
        if (Tensor* gx = t.grad_slot(ix)) {
            const Tensor& y = t.value(io);
            for (int i = 0; i < m; ++i) {
                auto yi = y.row(i);
                auto gi = g.row(i);
                auto di = gx->row(i);
                double dot = 0.0;
                for (int j = 0; j < n; ++j) {
                    dot += gi[j] * yi[j];
                }
                for (int j = 0; j < n; ++j) {
                    di[j] += yi[j] * (gi[j] - dot);
                }
            }
        }
    });
}

Var log_softmax_rows(const Var& x) {
    const int m = x.rows();
    const int n = x.cols();
    Tensor out(x.shape());
    for (int i = 0; i < m; ++i) {
        auto xi = x.value().row(i);
        auto oi = out.row(i);
        double mx = xi[0];
        for (int j = 1; j < n; ++j) {
            mx = std::max(mx, xi[j]);
        }
        double total = 0.0;
        for (int j = 0; j < n; ++j) {
            total += std::exp(xi[j] - mx);
        }
        const double lse = mx + std::log(total);
        for (int j = 0; j < n; ++j) {
            oi[j] = xi[j] - lse;
        }
    }
    const int ix = x.id();
    const int io = static_cast<int>(x.tape()->node_count());
    return x.tape()->emit(std::move(out), {x}, "log_softmax_rows", [=](Tape& t, const Tensor& g) {
        if (Tensor* gx = t.grad_slot(ix)) {
            const Tensor& y = t.value(io);
            for (int i = 0; i < m; ++i) {
                auto yi = y.row(i);
                auto gi = g.row(i);
                auto di = gx->row(i);
                double gsum = 0.0;
                for (int j = 0; j < n; ++j) {
                    gsum += gi[j];
                }
                for (int j = 0; j < n; ++j) {
                    di[j] += gi[j] - std::exp(yi[j]) * gsum;
                }
            }
        }
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    const int m = x.rows();
    const int n = x.cols();
    if (n < 2) {
        throw std::invalid_argument("layer_norm: need at least 2 features, got " + std::to_string(n));
    }
    if (gain.value().size() != static_cast<std::size_t>(n) || bias.value().size() != static_cast<std::size_t>(n)) {
        shape_error("layer_norm", x.shape(), gain.shape());
    }
    if (!(eps >= 0.0)) {
        throw std::invalid_argument("layer_norm: eps must be nonnegative");
    }
    Tensor out(x.shape());
    Tensor xhat(x.shape());
    std::vector<double> inv_std(static_cast<std::size_t>(m));
    const auto& gv = gain.value();
    const auto& bv = bias.value();
    for (int i = 0; i < m; ++i) {
        auto xi = x.value().row(i);
        double mu = 0.0;
        for (int j = 0; j < n; ++j) {
            mu += xi[j];
        }
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            var += (xi[j] - mu) * (xi[j] - mu);
        }
        var /= n;
        const double rstd = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = rstd;
        auto hi = xhat.row(i);
        auto oi = out.row(i);
        for (int j = 0; j < n; ++j) {
            hi[j] = (xi[j] - mu) * rstd;
            oi[j] = gv[j] * hi[j] + bv[j];
        }
    }
    const int ix = x.id();
    const int ig = gain.id();
    const int ib = bias.id();
    return x.tape()->emit(
        std::move(out), {x, gain, bias}, "layer_norm",
        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
            const Tensor& gv = t.value(ig);
            if (Tensor* gg = t.grad_slot(ig)) {
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) {
                        (*gg)[j] += g.at(i, j) * xhat.at(i, j);
                    }
                }
            }
            if (Tensor* gb = t.grad_slot(ib)) {
                for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) {
                        (*gb)[j] += g.at(i, j);
                    }
                }
            }
            if (Tensor* gx = t.grad_slot(ix)) {
                for (int i = 0; i < m; ++i) {
                    double mean_dh = 0.0;
                    double mean_dh_h = 0.0;
                    for (int j = 0; j < n; ++j) {
                        const double dh = g.at(i, j) * gv[j];
                        mean_dh += dh;
                        mean_dh_h += dh * xhat.at(i, j);
                    }
                    mean_dh /= n;
                    mean_dh_h /= n;
                    const double rstd = inv_std[static_cast<std::size_t>(i)];
                    for (int j = 0; j < n; ++j) {
                        const double dh = g.at(i, j) * gv[j];
                        gx->at(i, j) += rstd * (dh - mean_dh - xhat.at(i, j) * mean_dh_h);
                    }
                }
            }
        });
}

Var sum(const Var& a) {
    double total = 0.0;
    for (const double v : a.value().data()) {
        total += v;
    }
    const int ia = a.id();
    return a.tape()->emit(Tensor::scalar(total), {a}, "sum", [=](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_slot(ia)) {
            for (double& d : ga->data()) {
                d += g[0];
            }
        }
    });
}

Var mean(const Var& a) {
    return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var slice_rows(const Var& a, int begin, int count) {
    const int m = a.rows();
    const int n = a.cols();
    if (begin < 0 || count <= 0 || begin + count > m) {
        throw std::out_of_range("slice_rows: [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") outside " + shape_string(a.shape()));
    }
    const auto first = a.value().storage().begin() + static_cast<std::ptrdiff_t>(begin) * n;
    Tensor out({count, n}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(count) * n));
    const int ia = a.id();
    return a.tape()->emit(std::move(out), {a}, "slice_rows", [=](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_slot(ia)) {
            auto d = ga->data().subspan(static_cast<std::size_t>(begin) * n);
            for (std::size_t i = 0; i < g.size(); ++i) {
                d[i] += g[i];
            }
        }
    });
}

Var slice_cols(const Var& a, int begin, int count) {
    const int m = a.rows();
    const int n = a.cols();
    if (begin < 0 || count <= 0 || begin + count > n) {
        throw std::out_of_range("slice_cols: [" + std::to_string(begin) + ", " +
                                std::to_string(begin + count) + ") outside " + shape_string(a.shape()));
    }
    Tensor out({m, count});
    for (int i = 0; i < m; ++i) {
        auto src = a.value().row(i);
        std::copy(src.begin() + begin, src.begin() + begin + count, out.row(i).begin());
    }
    const int ia = a.id();
    return a.tape()->emit(std::move(out), {a}, "slice_cols", [=](Tape& t, const Tensor& g) {
        if (Tensor* ga = t.grad_slot(ia)) {
            for (int i = 0; i < m; ++i) {
                auto gi = g.row(i);
                auto di = ga->row(i);
                for (int j = 0; j < count; ++j) {
                    di[begin + j] += gi[j];
                }
            }
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_rows: no inputs");
    }
    const int n = parts.front().cols();
    int m = 0;
    std::vector<int> ids;
    std::vector<int> offsets;
    for (const Var& p : parts) {
        if (p.cols() != n) {
            shape_error("concat_rows", parts.front().shape(), p.shape());
        }
        offsets.push_back(m);
        ids.push_back(p.id());
        m += p.rows();
    }
    Tensor out({m, n});
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        std::copy(v.storage().begin(), v.storage().end(),
                  out.storage().begin() + static_cast<std::ptrdiff_t>(offsets[k]) * n);
    }
    return parts.front().tape()->emit(std::move(out), parts, "concat_rows", [=](Tape& t, const Tensor& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (Tensor* gp = t.grad_slot(ids[k])) {
                auto src = g.data().subspan(static_cast<std::size_t>(offsets[k]) * n, gp->size());
                for (std::size_t i = 0; i < src.size(); ++i) {
                    (*gp)[i] += src[i];
                }
            }
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_cols: no inputs");
    }
    const int m = parts.front().rows();
    int n = 0;
    std::vector<int> ids;
    std::vector<int> offsets;
    std::vector<int> widths;
    for (const Var& p : parts) {
        if (p.rows() != m) {
            shape_error("concat_cols", parts.front().shape(), p.shape());
        }
        offsets.push_back(n);
        widths.push_back(p.cols());
        ids.push_back(p.id());
        n += p.cols();
    }
    Tensor out({m, n});
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const auto& v = parts[k].value();
        for (int i = 0; i < m; ++i) {
            auto src = v.row(i);
            std::copy(src.begin(), src.end(), out.row(i).begin() + offsets[k]);
        }
    }
    return parts.front().tape()->emit(std::move(out), parts, "concat_cols", [=](Tape& t, const Tensor& g) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (Tensor* gp = t.grad_slot(ids[k])) {
                for (int i = 0; i < m; ++i) {
                    auto gi = g.row(i);
                    auto di = gp->row(i);
                    for (int j = 0; j < widths[k]; ++j) {
                        di[j] += gi[offsets[k] + j];
                    }
                }
            }
        }
    });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
    const int rows = table.rows();
    const int n = table.cols();
    std::vector<int> idx(ids.begin(), ids.end());
    if (idx.empty()) {
        throw std::invalid_argument("gather_rows: empty id list");
    }
    Tensor out({static_cast<int>(idx.size()), n});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= rows) {
            throw std::out_of_range("gather_rows: id " + std::to_string(idx[i]) + " outside table of " +
                                    std::to_string(rows) + " rows");
        }
        auto src = table.value().row(idx[i]);
        std::copy(src.begin(), src.end(), out.row(static_cast<int>(i)).begin());
    }
    const int it = table.id();
    return table.tape()->emit(std::move(out), {table}, "gather_rows",
                              [=, idx = std::move(idx)](Tape& t, const Tensor& g) {
                                  if (Tensor* gt = t.grad_slot(it)) {
                                      for (std::size_t i = 0; i < idx.size(); ++i) {
                                          auto gi = g.row(static_cast<int>(i));
                                          auto di = gt->row(idx[i]);
                                          for (int j = 0; j < n; ++j) {
                                              di[j] += gi[j];
                                          }
                                      }
                                  }
                              });
}

Var replace_rows(const Var& x, std::span<const unsigned char> mask, const Var& row) {
    const int m = x.rows();
    const int n = x.cols();
    if (mask.size() != static_cast<std::size_t>(m)) {
        throw std::invalid_argument("replace_rows: mask length " + std::to_string(mask.size()) +
                                    " does not match " + std::to_string(m) + " rows");
    }
    if (row.value().size() != static_cast<std::size_t>(n)) {
        shape_error("replace_rows", x.shape(), row.shape());
    }
    std::vector<unsigned char> flags(mask.begin(), mask.end());
    Tensor out = x.value();
    for (int i = 0; i < m; ++i) {
        if (flags[static_cast<std::size_t>(i)]) {
            std::copy(row.value().storage().begin(), row.value().storage().end(), out.row(i).begin());
        }
    }
    const int ix = x.id();
    const int ir = row.id();
    return x.tape()->emit(std::move(out), {x, row}, "replace_rows",
                          [=, flags = std::move(flags)](Tape& t, const Tensor& g) {
                              Tensor* gx = t.grad_slot(ix);
                              Tensor* gr = t.grad_slot(ir);
                              for (int i = 0; i < m; ++i) {
                                  auto gi = g.row(i);
                                  if (flags[static_cast<std::size_t>(i)]) {
                                      if (gr) {
                                          for (int j = 0; j < n; ++j) {
                                              (*gr)[j] += gi[j];
                                          }
                                      }
                                  } else if (gx) {
                                      auto di = gx->row(i);
                                      for (int j = 0; j < n; ++j) {
                                          di[j] += gi[j];
                                      }
                                  }
                              }
                          });
}

Var l2_normalize_rows(const Var& x) {
    const int m = x.rows();
    const int n = x.cols();
    Tensor out(x.shape());
    std::vector<double> norms(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        auto xi = x.value().row(i);
        double ss = 0.0;
        for (int j = 0; j < n; ++j) {
            ss += xi[j] * xi[j];
        }
        const double norm = std::sqrt(ss);
        if (!(norm > 0.0)) {
            throw std::domain_error("l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
        }
        norms[static_cast<std::size_t>(i)] = norm;
        auto oi = out.row(i);
        for (int j = 0; j < n; ++j) {
            oi[j] = xi[j] / norm;
        }
    }
    const int ix = x.id();
    const int io = static_cast<int>(x.tape()->node_count());
    return x.tape()->emit(std::move(out), {x}, "l2_normalize_rows",
                          [=, norms = std::move(norms)](Tape& t, const Tensor& g) {
                              if (Tensor* gx = t.grad_slot(ix)) {
                                  const Tensor& y = t.value(io);
                                  for (int i = 0; i < m; ++i) {
                                      auto yi = y.row(i);
                                      auto gi = g.row(i);
                                      auto di = gx->row(i);
                                      double dot = 0.0;
                                      for (int j = 0; j < n; ++j) {
                                          dot += yi[j] * gi[j];
                                      }
                                      const double inv = 1.0 / norms[static_cast<std::size_t>(i)];
                                      for (int j = 0; j < n; ++j) {
                                          di[j] += (gi[j] - yi[j] * dot) * inv;
                                      }
                                  }
                              }
                          });
}

Var smooth_l1(const Var& a, const Var& b, double gamma) {
    require_same_shape("smooth_l1", a, b);
    if (!(gamma > 0.0)) {
        throw std::invalid_argument("smooth_l1: gamma must be positive");
    }
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double d = a.value()[i] - b.value()[i];
        out[i] = std::abs(d) < gamma ? 0.5 * d * d : std::abs(d) - 0.5;
    }
    const int ia = a.id();
    const int ib = b.id();
    return a.tape()->emit(std::move(out), {a, b}, "smooth_l1", [=](Tape& t, const Tensor& g) {
        Tensor* ga = t.grad_slot(ia);
        Tensor* gb = t.grad_slot(ib);
        const Tensor& av = t.value(ia);
        const Tensor& bv = t.value(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double d = av[i] - bv[i];
            const double slope = std::abs(d) < gamma ? d : (d > 0.0 ? 1.0 : -1.0);
            if (ga) {
                (*ga)[i] += g[i] * slope;
            }
            if (gb) {
                (*gb)[i] -= g[i] * slope;
            }
        }
    });
}

}  // namespace syncmask
