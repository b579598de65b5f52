#include "polm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace polm::ad {

namespace {

std::size_t shape_size(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int e : shape) {
        if (e < 0) throw std::invalid_argument("tensor: negative extent");
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

void require(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void check_chw(const TensorPtr& t, const char* who) {
    if (!t || t->shape.size() != 3)
        throw std::invalid_argument(std::string(who) + ": expected C x H x W tensor");
}

// Reflect index without edge repetition: -1 -> 1, n -> n-2.
inline int reflect(int i, int n) {
    if (i < 0) return -i;
    if (i >= n) return 2 * n - 2 - i;
    return i;
}

// Copies one H x W channel into an (H+2p) x (W+2p) buffer.
void pad_channel(const double* src, int H, int W, int p, Padding mode, double* dst) {
    const int Wp = W + 2 * p;
    for (int y = -p; y < H + p; ++y) {
        double* row = dst + static_cast<std::size_t>(y + p) * Wp;
        if (mode == Padding::Zero && (y < 0 || y >= H)) {
            std::fill(row, row + Wp, 0.0);
            continue;
        }
        const double* srow = src + static_cast<std::size_t>(mode == Padding::Reflect ? reflect(y, H) : y) * W;
        for (int x = -p; x < W + p; ++x) {
            if (x >= 0 && x < W) {
                row[x + p] = srow[x];
            } else if (mode == Padding::Zero) {
                row[x + p] = 0.0;
            } else {
                row[x + p] = srow[reflect(x, W)];
            }
        }
    }
}

// Accumulates gradients of a padded channel back onto the source channel.
void unpad_scatter(const double* gpad, int H, int W, int p, Padding mode, double* gsrc) {
    const int Wp = W + 2 * p;
    for (int y = -p; y < H + p; ++y) {
        const double* row = gpad + static_cast<std::size_t>(y + p) * Wp;
        if (mode == Padding::Zero && (y < 0 || y >= H)) continue;
        const int sy = (mode == Padding::Reflect) ? reflect(y, H) : y;
        double* srow = gsrc + static_cast<std::size_t>(sy) * W;
        for (int x = -p; x < W + p; ++x) {
            if (mode == Padding::Zero && (x < 0 || x >= W)) continue;
            const int sx = (mode == Padding::Reflect) ? reflect(x, W) : x;
            srow[sx] += row[x + p];
        }
    }
}

TensorPtr unary(const TensorPtr& x, const char* name,
                const std::function<double(double)>& fwd,
                const std::function<double(double, double)>& dfdx_times_g) {
    (void)name;
    auto out = make_tensor(x->shape);
    for (std::size_t i = 0; i < x->size(); ++i) out->data[i] = fwd(x->data[i]);
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorPtr xi = x;
        out->backward_fn = [xi, dfdx_times_g](Tensor& self) {
            xi->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i)
                xi->grad[i] += dfdx_times_g(xi->data[i], self.grad[i]);
        };
    }
    return out;
}

}  // namespace

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    std::fill(grad.begin(), grad.end(), 0.0);
}

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad) {
    auto t = std::make_shared<Tensor>();
    t->data.assign(shape_size(shape), 0.0);
    t->shape = std::move(shape);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != data.size())
        throw std::invalid_argument("make_tensor: shape/data size mismatch");
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->data = std::move(data);
    t->requires_grad = requires_grad;
    return t;
}

TensorPtr make_scalar(double value, bool requires_grad) {
    return make_tensor({1}, {value}, requires_grad);
}

TensorPtr conv2d(const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, Padding padding) {
    check_chw(input, "conv2d input");
    if (!kernel || kernel->shape.size() != 4)
        throw std::invalid_argument("conv2d: kernel must be C_out x C_in x k x k");
    const int Cin = input->shape[0], H = input->shape[1], W = input->shape[2];
    const int Cout = kernel->shape[0], k = kernel->shape[2];
    require(kernel->shape[1] == Cin, "conv2d: kernel C_in mismatch");
    require(kernel->shape[3] == k, "conv2d: kernel must be square");
    require(k % 2 == 1, "conv2d: kernel size must be odd");
    require(bias && bias->shape == std::vector<int>{Cout}, "conv2d: bias shape mismatch");
    if (padding == Padding::Reflect) require(H >= k && W >= k, "conv2d: extents < k with reflect padding");

    const int p = k / 2;
    const int Hp = H + 2 * p, Wp = W + 2 * p;
    const std::size_t plane = static_cast<std::size_t>(H) * W;
    const std::size_t pplane = static_cast<std::size_t>(Hp) * Wp;

    auto padded = std::make_shared<std::vector<double>>(static_cast<std::size_t>(Cin) * pplane);
    for (int ci = 0; ci < Cin; ++ci)
        pad_channel(input->data.data() + ci * plane, H, W, p, padding, padded->data() + ci * pplane);

    auto out = make_tensor({Cout, H, W});
    for (int co = 0; co < Cout; ++co) {
        double* oplane = out->data.data() + co * plane;
        std::fill(oplane, oplane + plane, bias->data[co]);
        for (int ci = 0; ci < Cin; ++ci) {
            const double* pp = padded->data() + ci * pplane;
            const double* wk = kernel->data.data() + (static_cast<std::size_t>(co) * Cin + ci) * k * k;
            for (int dy = 0; dy < k; ++dy) {
                for (int dx = 0; dx < k; ++dx) {
                    const double w = wk[dy * k + dx];
                    if (w == 0.0) continue;
                    for (int y = 0; y < H; ++y) {
                        const double* prow = pp + static_cast<std::size_t>(y + dy) * Wp + dx;
                        double* orow = oplane + static_cast<std::size_t>(y) * W;
                        for (int x = 0; x < W; ++x) orow[x] += w * prow[x];
                    }
                }
            }
        }
    }

    if (input->requires_grad || kernel->requires_grad || bias->requires_grad) {
        out->requires_grad = true;
        out->parents = {input, kernel, bias};
        TensorPtr in = input, kn = kernel, bs = bias;
        out->backward_fn = [in, kn, bs, padded, padding, Cin, Cout, H, W, k, p,
                            plane, pplane, Hp, Wp](Tensor& self) {
            if (bs->requires_grad) {
                bs->ensure_grad();
                for (int co = 0; co < Cout; ++co) {
                    const double* g = self.grad.data() + co * plane;
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) acc += g[i];
                    bs->grad[co] += acc;
                }
            }
            if (kn->requires_grad) {
                kn->ensure_grad();
                for (int co = 0; co < Cout; ++co) {
                    const double* g = self.grad.data() + co * plane;
                    for (int ci = 0; ci < Cin; ++ci) {
                        const double* pp = padded->data() + ci * pplane;
                        double* gw = kn->grad.data() + (static_cast<std::size_t>(co) * Cin + ci) * k * k;
                        for (int dy = 0; dy < k; ++dy) {
                            for (int dx = 0; dx < k; ++dx) {
                                double acc = 0.0;
                                for (int y = 0; y < H; ++y) {
                                    const double* prow = pp + static_cast<std::size_t>(y + dy) * Wp + dx;
                                    const double* grow = g + static_cast<std::size_t>(y) * W;
                                    for (int x = 0; x < W; ++x) acc += grow[x] * prow[x];
                                }
                                gw[dy * k + dx] += acc;
                            }
                        }
                    }
                }
            }
            if (in->requires_grad) {
                in->ensure_grad();
                std::vector<double> gpad(pplane);
                for (int ci = 0; ci < Cin; ++ci) {
                    std::fill(gpad.begin(), gpad.end(), 0.0);
                    for (int co = 0; co < Cout; ++co) {
                        const double* g = self.grad.data() + co * plane;
                        const double* wk = kn->data.data() + (static_cast<std::size_t>(co) * Cin + ci) * k * k;
                        for (int dy = 0; dy < k; ++dy) {
                            for (int dx = 0; dx < k; ++dx) {
                                const double w = wk[dy * k + dx];
                                if (w == 0.0) continue;
                                for (int y = 0; y < H; ++y) {
                                    double* prow = gpad.data() + static_cast<std::size_t>(y + dy) * Wp + dx;
                                    const double* grow = g + static_cast<std::size_t>(y) * W;
                                    for (int x = 0; x < W; ++x) prow[x] += w * grow[x];
                                }
                            }
                        }
                    }
                    unpad_scatter(gpad.data(), H, W, p, padding, in->grad.data() + ci * plane);
                }
            }
        };
    }
    return out;
}

TensorPtr downsample_stride2(const TensorPtr& input) {
    check_chw(input, "downsample_stride2");
    const int C = input->shape[0], H = input->shape[1], W = input->shape[2];
    require(H >= 2 && W >= 2, "downsample_stride2: extents must be >= 2");
    require(H % 2 == 0 && W % 2 == 0, "downsample_stride2: extents must be even");
    const int Ho = H / 2, Wo = W / 2;
    auto out = make_tensor({C, Ho, Wo});
    for (int c = 0; c < C; ++c) {
        const double* ip = input->data.data() + static_cast<std::size_t>(c) * H * W;
        double* op = out->data.data() + static_cast<std::size_t>(c) * Ho * Wo;
        for (int y = 0; y < Ho; ++y)
            for (int x = 0; x < Wo; ++x)
                op[y * Wo + x] = 0.25 * (ip[(2 * y) * W + 2 * x] + ip[(2 * y) * W + 2 * x + 1] +
                                         ip[(2 * y + 1) * W + 2 * x] + ip[(2 * y + 1) * W + 2 * x + 1]);
    }
    if (input->requires_grad) {
        out->requires_grad = true;
        out->parents = {input};
        TensorPtr in = input;
        out->backward_fn = [in, C, H, W, Ho, Wo](Tensor& self) {
            in->ensure_grad();
            for (int c = 0; c < C; ++c) {
                const double* g = self.grad.data() + static_cast<std::size_t>(c) * Ho * Wo;
                double* gi = in->grad.data() + static_cast<std::size_t>(c) * H * W;
                for (int y = 0; y < Ho; ++y)
                    for (int x = 0; x < Wo; ++x) {
                        const double v = 0.25 * g[y * Wo + x];
                        gi[(2 * y) * W + 2 * x] += v;
                        gi[(2 * y) * W + 2 * x + 1] += v;
                        gi[(2 * y + 1) * W + 2 * x] += v;
                        gi[(2 * y + 1) * W + 2 * x + 1] += v;
                    }
            }
        };
    }
    return out;
}

TensorPtr upsample_nearest2x(const TensorPtr& input) {
    check_chw(input, "upsample_nearest2x");
    const int C = input->shape[0], H = input->shape[1], W = input->shape[2];
    const int Ho = 2 * H, Wo = 2 * W;
    auto out = make_tensor({C, Ho, Wo});
    for (int c = 0; c < C; ++c) {
        const double* ip = input->data.data() + static_cast<std::size_t>(c) * H * W;
        double* op = out->data.data() + static_cast<std::size_t>(c) * Ho * Wo;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double v = ip[y * W + x];
                op[(2 * y) * Wo + 2 * x] = v;
                op[(2 * y) * Wo + 2 * x + 1] = v;
                op[(2 * y + 1) * Wo + 2 * x] = v;
                op[(2 * y + 1) * Wo + 2 * x + 1] = v;
            }
    }
    if (input->requires_grad) {
        out->requires_grad = true;
        out->parents = {input};
        TensorPtr in = input;
        out->backward_fn = [in, C, H, W, Ho, Wo](Tensor& self) {
            in->ensure_grad();
            for (int c = 0; c < C; ++c) {
                const double* g = self.grad.data() + static_cast<std::size_t>(c) * Ho * Wo;
                double* gi = in->grad.data() + static_cast<std::size_t>(c) * H * W;
                for (int y = 0; y < H; ++y)
                    for (int x = 0; x < W; ++x)
                        gi[y * W + x] += g[(2 * y) * Wo + 2 * x] + g[(2 * y) * Wo + 2 * x + 1] +
                                         g[(2 * y + 1) * Wo + 2 * x] + g[(2 * y + 1) * Wo + 2 * x + 1];
            }
        };
    }
    return out;
}

TensorPtr leaky_relu(const TensorPtr& x, double slope) {
    return unary(
        x, "leaky_relu", [slope](double v) { return v >= 0.0 ? v : slope * v; },
        [slope](double v, double g) { return v >= 0.0 ? g : slope * g; });
}

TensorPtr exp(const TensorPtr& x) {
    return unary(
        x, "exp", [](double v) { return std::exp(v); },
        [](double v, double g) { return std::exp(v) * g; });
}

TensorPtr log(const TensorPtr& x) {
    for (double v : x->data)
        if (!(v > 0.0)) throw std::domain_error("log: non-positive operand");
    return unary(
        x, "log", [](double v) { return std::log(v); },
        [](double v, double g) { return g / v; });
}

TensorPtr square(const TensorPtr& x) {
    return unary(
        x, "square", [](double v) { return v * v; },
        [](double v, double g) { return 2.0 * v * g; });
}

namespace {

TensorPtr binary(const TensorPtr& a, const TensorPtr& b, const char* name,
                 const std::function<double(double, double)>& fwd,
                 const std::function<void(const Tensor&, Tensor&, Tensor&)>& bwd) {
    if (a->shape != b->shape)
        throw std::invalid_argument(std::string(name) + ": shape mismatch");
    auto out = make_tensor(a->shape);
    for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = fwd(a->data[i], b->data[i]);
    if (a->requires_grad || b->requires_grad) {
        out->requires_grad = true;
        out->parents = {a, b};
        TensorPtr ap = a, bp = b;
        out->backward_fn = [ap, bp, bwd](Tensor& self) { bwd(self, *ap, *bp); };
    }
    return out;
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    return binary(a, b, "add", [](double x, double y) { return x + y; },
                  [](const Tensor& self, Tensor& ta, Tensor& tb) {
                      if (ta.requires_grad) {
                          ta.ensure_grad();
                          for (std::size_t i = 0; i < self.size(); ++i) ta.grad[i] += self.grad[i];
                      }
                      if (tb.requires_grad) {
                          tb.ensure_grad();
                          for (std::size_t i = 0; i < self.size(); ++i) tb.grad[i] += self.grad[i];
                      }
                  });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
    return binary(a, b, "sub", [](double x, double y) { return x - y; },
                  [](const Tensor& self, Tensor& ta, Tensor& tb) {
                      if (ta.requires_grad) {
                          ta.ensure_grad();
                          for (std::size_t i = 0; i < self.size(); ++i) ta.grad[i] += self.grad[i];
                      }
                      if (tb.requires_grad) {
                          tb.ensure_grad();
                          for (std::size_t i = 0; i < self.size(); ++i) tb.grad[i] -= self.grad[i];
                      }
                  });
}

TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    return binary(a, b, "mul", [](double x, double y) { return x * y; },
                  [](const Tensor& self, Tensor& ta, Tensor& tb) {
                      if (ta.requires_grad) {
                          ta.ensure_grad();
                          for (std::size_t i = 0; i < self.size(); ++i)
                              ta.grad[i] += tb.data[i] * self.grad[i];
                      }
                      if (tb.requires_grad) {
                          tb.ensure_grad();
                          for (std::size_t i = 0; i < self.size(); ++i)
                              tb.grad[i] += ta.data[i] * self.grad[i];
                      }
                  });
}

TensorPtr scalar_mul(const TensorPtr& x, double s) {
    return unary(
        x, "scalar_mul", [s](double v) { return s * v; },
        [s](double, double g) { return s * g; });
}

TensorPtr negate(const TensorPtr& x) { return scalar_mul(x, -1.0); }

TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b) {
    check_chw(a, "concat_channels");
    check_chw(b, "concat_channels");
    require(a->shape[1] == b->shape[1] && a->shape[2] == b->shape[2],
            "concat_channels: spatial extents differ");
    const int Ca = a->shape[0], Cb = b->shape[0];
    auto out = make_tensor({Ca + Cb, a->shape[1], a->shape[2]});
    std::copy(a->data.begin(), a->data.end(), out->data.begin());
    std::copy(b->data.begin(), b->data.end(), out->data.begin() + a->size());
    if (a->requires_grad || b->requires_grad) {
        out->requires_grad = true;
        out->parents = {a, b};
        TensorPtr ap = a, bp = b;
        out->backward_fn = [ap, bp](Tensor& self) {
            if (ap->requires_grad) {
                ap->ensure_grad();
                for (std::size_t i = 0; i < ap->size(); ++i) ap->grad[i] += self.grad[i];
            }
            if (bp->requires_grad) {
                bp->ensure_grad();
                for (std::size_t i = 0; i < bp->size(); ++i)
                    bp->grad[i] += self.grad[ap->size() + i];
            }
        };
    }
    return out;
}

TensorPtr slice_channels(const TensorPtr& x, int first, int count) {
    check_chw(x, "slice_channels");
    require(first >= 0 && count >= 0 && first + count <= x->shape[0],
            "slice_channels: range out of bounds");
    const std::size_t plane = static_cast<std::size_t>(x->shape[1]) * x->shape[2];
    auto out = make_tensor({count, x->shape[1], x->shape[2]});
    std::copy(x->data.begin() + first * plane, x->data.begin() + (first + count) * plane,
              out->data.begin());
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorPtr xp = x;
        out->backward_fn = [xp, first, plane](Tensor& self) {
            xp->ensure_grad();
            for (std::size_t i = 0; i < self.size(); ++i)
                xp->grad[first * plane + i] += self.grad[i];
        };
    }
    return out;
}

TensorPtr reduce_sum(const TensorPtr& x) {
    auto out = make_tensor({1});
    out->data[0] = std::accumulate(x->data.begin(), x->data.end(), 0.0);
    if (x->requires_grad) {
        out->requires_grad = true;
        out->parents = {x};
        TensorPtr xp = x;
        out->backward_fn = [xp](Tensor& self) {
            xp->ensure_grad();
            const double g = self.grad[0];
            for (std::size_t i = 0; i < xp->size(); ++i) xp->grad[i] += g;
        };
    }
    return out;
}

void backward(const TensorPtr& loss) {
    if (!loss || !loss->is_scalar())
        throw std::invalid_argument("backward: loss must be a scalar");
    // Iterative post-order DFS gives reverse topological order.
    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    std::vector<std::pair<TensorPtr, std::size_t>> stack;
    stack.emplace_back(loss, 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorPtr parent = node->parents[next++];
            if (parent->requires_grad && seen.insert(parent.get()).second)
                stack.emplace_back(parent, 0);
        } else {
            order.push_back(node.get());
            stack.pop_back();
        }
    }
    loss->ensure_grad();
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Tensor* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

void AdamWState::init(const std::vector<TensorPtr>& params) {
    step = 0;
    m.clear();
    v.clear();
    for (const auto& p : params) {
        m.emplace_back(p->size(), 0.0);
        v.emplace_back(p->size(), 0.0);
    }
}

void adamw_step(const std::vector<TensorPtr>& params, AdamWState& state, const AdamWParams& hp) {
    if (!state.initialized()) state.init(params);
    if (state.m.size() != params.size())
        throw std::invalid_argument("adamw_step: state/parameter count mismatch");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = *params[pi];
        if (state.m[pi].size() != p.size())
            throw std::invalid_argument("adamw_step: moment buffer shape mismatch");
        auto& m = state.m[pi];
        auto& v = state.v[pi];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = i < p.grad.size() ? p.grad[i] : 0.0;
            m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g;
            v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.data[i] -= hp.lr * (mhat / (std::sqrt(vhat) + hp.eps) + hp.weight_decay * p.data[i]);
        }
    }
}

GradCheckReport grad_check(const std::function<TensorPtr(const TensorPtr&)>& f,
                           const TensorPtr& input, double tol, double fd_eps) {
    auto probe = make_tensor(input->shape, input->data, true);
    auto loss = f(probe);
    if (!loss->is_scalar()) throw std::invalid_argument("grad_check: closure must return a scalar");
    backward(loss);
    probe->ensure_grad();
    std::vector<double> analytic = probe->grad;

    GradCheckReport report;
    for (std::size_t i = 0; i < probe->size(); ++i) {
        auto shifted = make_tensor(input->shape, input->data, false);
        shifted->data[i] = input->data[i] + fd_eps;
        const double up = f(shifted)->data[0];
        shifted->data[i] = input->data[i] - fd_eps;
        const double dn = f(shifted)->data[0];
        const double numeric = (up - dn) / (2.0 * fd_eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        report.max_rel_err = std::max(report.max_rel_err, std::abs(analytic[i] - numeric) / denom);
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

}  // namespace polm::ad
