#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace polm::ad {

enum class Padding { Zero, Reflect };

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major double tensor with an optional gradient buffer and the
// bookkeeping needed for reverse-mode differentiation. Graphs are built by
// the free functions below; backward() walks them once in reverse
// topological order. Gradients accumulate until zero_grad().
class Tensor {
public:
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;   // empty until first backward touch
    bool requires_grad = false;

    std::vector<TensorPtr> parents;
    std::function<void(Tensor&)> backward_fn;

    std::size_t size() const { return data.size(); }
    void ensure_grad();
    void zero_grad();
    bool is_scalar() const { return data.size() == 1; }
};

TensorPtr make_tensor(std::vector<int> shape, bool requires_grad = false);
TensorPtr make_tensor(std::vector<int> shape, std::vector<double> data,
                      bool requires_grad = false);
TensorPtr make_scalar(double value, bool requires_grad = false);

// conv2d: same-size cross-correlation, kernel C_out x C_in x k x k, k odd.
TensorPtr conv2d(const TensorPtr& input, const TensorPtr& kernel,
                 const TensorPtr& bias, Padding padding);

// 2x2 average pooling; extents must be even.
TensorPtr downsample_stride2(const TensorPtr& input);

// Nearest-neighbour 2x upsampling; backward sums each 2x2 block.
TensorPtr upsample_nearest2x(const TensorPtr& input);

TensorPtr leaky_relu(const TensorPtr& x, double slope);
TensorPtr exp(const TensorPtr& x);
TensorPtr log(const TensorPtr& x);   // rejects non-positive entries
TensorPtr square(const TensorPtr& x);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(const TensorPtr& a, const TensorPtr& b);
TensorPtr scalar_mul(const TensorPtr& x, double s);
TensorPtr negate(const TensorPtr& x);

TensorPtr concat_channels(const TensorPtr& a, const TensorPtr& b);
TensorPtr slice_channels(const TensorPtr& x, int first, int count);
TensorPtr reduce_sum(const TensorPtr& x);

// Reverse-mode sweep from a scalar loss. Every reachable node with
// requires_grad receives (accumulates) its gradient.
void backward(const TensorPtr& loss);

struct AdamWParams {
    double lr = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

struct AdamWState {
    std::int64_t step = 0;
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;

    void init(const std::vector<TensorPtr>& params);
    bool initialized() const { return !m.empty(); }
};

// Decoupled-weight-decay Adam update with bias correction. Reads each
// parameter's grad buffer (missing grad counts as zero).
void adamw_step(const std::vector<TensorPtr>& params, AdamWState& state,
                const AdamWParams& hp);

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
};

// Central finite differences against the analytic gradient of f (a map from
// the input tensor to a scalar). Relative error denominator is
// max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const std::function<TensorPtr(const TensorPtr&)>& f,
                           const TensorPtr& input, double tol,
                           double fd_eps = 1e-5);

}  // namespace polm::ad
