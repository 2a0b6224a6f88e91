#include "agsfcos/gc_block.hpp"

#include "agsfcos/errors.hpp"
#include "agsfcos/ops.hpp"

namespace agsfcos {

GcBlockParams make_gc_block(ParameterSet& params, const std::string& prefix,
                            std::size_t channels, std::size_t ratio, Rng& rng) {
  if (ratio == 0 || channels % ratio != 0) {
    throw ConfigError("gc block: ratio " + std::to_string(ratio) +
                      " does not divide " + std::to_string(channels) +
                      " channels");
  }
  const std::size_t hidden = channels / ratio;
  GcBlockParams p;
  p.channels = channels;
  p.ratio = ratio;
  p.w_k = params.add(prefix + ".w_k", kaiming_conv_weight({1, channels, 1, 1}, rng));
  p.w_v1 = params.add(prefix + ".w_v1",
                      kaiming_conv_weight({hidden, channels, 1, 1}, rng));
  p.b_v1 = params.add(prefix + ".b_v1", Tensor({hidden}, 0.0));
  p.ln_gamma = params.add(prefix + ".ln.gamma", Tensor({hidden}, 1.0));
  p.ln_beta = params.add(prefix + ".ln.beta", Tensor({hidden}, 0.0));
  p.w_v2 = params.add(prefix + ".w_v2", Tensor({channels, hidden, 1, 1}, 0.0));
  p.b_v2 = params.add(prefix + ".b_v2", Tensor({channels}, 0.0));
  return p;
}

Tensor gc_forward(const Tensor& x, const GcBlockParams& p, GcTrace* trace) {
  if (x.rank() != 4 || x.dim(1) != p.channels) {
    throw DimensionError("gc block: expected [N," + std::to_string(p.channels) +
                         ",H,W], got " + shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  const std::size_t positions = x.dim(2) * x.dim(3);

  // Context modeling: softmax over positions of the 1x1 logits, then the
  // attention-weighted sum of x.
  Tensor logits = reshape(conv2d(x, p.w_k, {}, 1, 0), {n, positions});
  Tensor attention = softmax(logits, 1);
  Tensor context = batched_matmul(reshape(x, {n, c, positions}),
                                  reshape(attention, {n, positions, 1}));
  context = reshape(context, {n, c, 1, 1});

  // Bottleneck transform with layer norm over the reduced channel axis.
  Tensor t = conv2d(context, p.w_v1, p.b_v1, 1, 0);
  t = relu(layer_norm(t, 1, p.ln_gamma, p.ln_beta));
  Tensor update = conv2d(t, p.w_v2, p.b_v2, 1, 0);

  if (trace) *trace = {attention, context, update};
  return broadcast_add(x, update);
}

}  // namespace agsfcos
