#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "onfire/ops.hpp"
#include "onfire/weights.hpp"

namespace onfire {

// ---------------------------------------------------------------------------
// Conv + batch-norm unit: `prefix.conv.weight`, `prefix.bn.{gamma,beta,mean,var}`.
// ---------------------------------------------------------------------------

inline Tensor conv_bn(const Tensor& x, const WeightView& w, const std::string& prefix,
                      const ConvParams& p, bool relu_after) {
  Tensor y = conv2d(x, w.get(prefix + ".conv.weight"), p);
  y = w.bn(y, prefix + ".bn");
  return relu_after ? relu(y) : y;
}

inline void conv_bn_specs(std::vector<WeightSpec>& out, const std::string& prefix,
                          std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
                          std::size_t groups = 1) {
  add_conv_spec(out, prefix + ".conv.weight", out_ch, in_ch / groups, kernel);
  add_bn_specs(out, prefix + ".bn", out_ch);
}

// ---------------------------------------------------------------------------
// ShuffleNetV2 units
// ---------------------------------------------------------------------------

inline constexpr std::size_t kShuffleGroups = 2;

/// Split-transform-shuffle unit; output shape equals input shape.
inline Tensor shufflenet_normal_cell(const Tensor& x, const WeightView& w,
                                     const std::string& prefix) {
  const std::size_t c = x.shape().c;
  if (c % 2 != 0) {
    throw std::invalid_argument("shufflenet_normal_cell: odd channel count " + std::to_string(c));
  }
  const std::size_t half = c / 2;
  auto [left, right] = channel_split(x, half);
  const int groups = static_cast<int>(half);
  right = conv_bn(right, w, prefix + ".branch2.pw1", ConvParams::square(1), true);
  right = conv_bn(right, w, prefix + ".branch2.dw", ConvParams::square(3, 1, 1, groups), false);
  right = conv_bn(right, w, prefix + ".branch2.pw2", ConvParams::square(1), true);
  return channel_shuffle(concat_channels({left, right}), kShuffleGroups);
}

inline void shufflenet_normal_specs(std::vector<WeightSpec>& out, const std::string& prefix,
                                    std::size_t channels) {
  const std::size_t half = channels / 2;
  conv_bn_specs(out, prefix + ".branch2.pw1", half, half, 1);
  conv_bn_specs(out, prefix + ".branch2.dw", half, half, 3, half);
  conv_bn_specs(out, prefix + ".branch2.pw2", half, half, 1);
}

/// Both branches see the whole input; depthwise convs use stride 2.
inline Tensor shufflenet_reduction_cell(const Tensor& x, const WeightView& w,
                                        const std::string& prefix, std::size_t c_out) {
  if (c_out % 2 != 0) {
    throw std::invalid_argument("shufflenet_reduction_cell: odd output width " +
                                std::to_string(c_out));
  }
  const int in_groups = static_cast<int>(x.shape().c);
  const int branch_groups = static_cast<int>(c_out / 2);
  Tensor left = conv_bn(x, w, prefix + ".branch1.dw", ConvParams::square(3, 2, 1, in_groups), false);
  left = conv_bn(left, w, prefix + ".branch1.pw", ConvParams::square(1), true);
  Tensor right = conv_bn(x, w, prefix + ".branch2.pw1", ConvParams::square(1), true);
  right = conv_bn(right, w, prefix + ".branch2.dw", ConvParams::square(3, 2, 1, branch_groups),
                  false);
  right = conv_bn(right, w, prefix + ".branch2.pw2", ConvParams::square(1), true);
  return channel_shuffle(concat_channels({left, right}), kShuffleGroups);
}

inline void shufflenet_reduction_specs(std::vector<WeightSpec>& out, const std::string& prefix,
                                       std::size_t in_ch, std::size_t c_out) {
  const std::size_t b = c_out / 2;
  conv_bn_specs(out, prefix + ".branch1.dw", in_ch, in_ch, 3, in_ch);
  conv_bn_specs(out, prefix + ".branch1.pw", in_ch, b, 1);
  conv_bn_specs(out, prefix + ".branch2.pw1", in_ch, b, 1);
  conv_bn_specs(out, prefix + ".branch2.dw", b, b, 3, b);
  conv_bn_specs(out, prefix + ".branch2.pw2", b, b, 1);
}

// ---------------------------------------------------------------------------
// NASNet-A cells
// ---------------------------------------------------------------------------

enum class NasOp { kSep3, kSep5, kSep7, kAvg3, kMax3, kIdentity };

inline int separable_kernel(NasOp op) {
  switch (op) {
    case NasOp::kSep3: return 3;
    case NasOp::kSep5: return 5;
    case NasOp::kSep7: return 7;
    default: return 0;
  }
}

/// Operand index: 0 = adjusted previous-previous input, 1 = adjusted current input,
/// 2 + i = result of combine i.
inline constexpr int kLeft = 0;
inline constexpr int kRight = 1;
inline constexpr int combine_ref(int i) { return 2 + i; }

struct NasBranch {
  NasOp op;
  int input;
};

/// One pairwise combination: op_a(input_a) + op_b(input_b).
struct NasCombine {
  NasBranch a;
  NasBranch b;
};

struct NasCellPlan {
  bool reduction = false;
  std::vector<NasCombine> combines;
  std::vector<int> outputs;  // operand indices concatenated into the cell output
};

inline const NasCellPlan& nas_normal_plan() {
  static const NasCellPlan plan{
      false,
      {
          {{NasOp::kSep5, kRight}, {NasOp::kSep3, kLeft}},
          {{NasOp::kSep5, kLeft}, {NasOp::kSep3, kLeft}},
          {{NasOp::kAvg3, kRight}, {NasOp::kIdentity, kLeft}},
          {{NasOp::kAvg3, kLeft}, {NasOp::kAvg3, kLeft}},
          {{NasOp::kSep3, kRight}, {NasOp::kIdentity, kRight}},
      },
      {kLeft, combine_ref(0), combine_ref(1), combine_ref(2), combine_ref(3), combine_ref(4)}};
  return plan;
}

inline const NasCellPlan& nas_reduction_plan() {
  static const NasCellPlan plan{
      true,
      {
          {{NasOp::kSep5, kRight}, {NasOp::kSep7, kLeft}},
          {{NasOp::kMax3, kRight}, {NasOp::kSep7, kLeft}},
          {{NasOp::kAvg3, kRight}, {NasOp::kSep5, kLeft}},
          {{NasOp::kAvg3, combine_ref(0)}, {NasOp::kIdentity, combine_ref(1)}},
          {{NasOp::kSep3, combine_ref(0)}, {NasOp::kMax3, kRight}},
      },
      {combine_ref(1), combine_ref(2), combine_ref(3), combine_ref(4)}};
  return plan;
}

/// Separable-convolution census of a plan, keyed by kernel size.
inline std::map<int, int> separable_census(const NasCellPlan& plan) {
  std::map<int, int> census;
  for (const auto& c : plan.combines) {
    for (const NasBranch& b : {c.a, c.b}) {
      if (int k = separable_kernel(b.op)) ++census[k];
    }
  }
  return census;
}

enum class PrevAdjust {
  kNone,        // previous input used as-is
  kConv1x1,     // ReLU -> 1x1 conv -> BN
  kFactorized,  // ReLU -> two stride-2 1x1 convs on offset grids -> concat -> BN
};

struct NasCellSpec {
  std::string name;
  bool reduction = false;
  std::size_t h_channels = 0;
  std::size_t prev_channels = 0;
  std::size_t width = 0;  // F: channels of every combine result
  PrevAdjust prev_adjust = PrevAdjust::kConv1x1;
  bool single_input = false;  // both operands come from the current input

  const NasCellPlan& plan() const { return reduction ? nas_reduction_plan() : nas_normal_plan(); }
  std::size_t out_channels() const { return plan().outputs.size() * width; }
};

namespace detail {

inline std::string branch_prefix(const NasCellSpec& cell, std::size_t combine, char side) {
  return cell.name + ".comb" + std::to_string(combine) + "." + side;
}

inline std::size_t operand_channels(const NasCellSpec& cell, int input) {
  if (input == kLeft && cell.prev_adjust == PrevAdjust::kNone) return cell.prev_channels;
  return cell.width;
}

}  // namespace detail

/// (ReLU -> depthwise -> pointwise -> BN) twice; only the first depthwise is strided.
inline Tensor separable_block(const Tensor& x, const WeightView& w, const std::string& prefix,
                              int kernel, int stride) {
  const int pad = kernel / 2;
  Tensor y = relu(x);
  y = depthwise_conv2d(y, w.get(prefix + ".sep1.dw.weight"), ConvParams::square(kernel, stride, pad));
  y = conv2d(y, w.get(prefix + ".sep1.pw.weight"), ConvParams::square(1));
  y = w.bn(y, prefix + ".sep1.bn");
  y = relu(y);
  y = depthwise_conv2d(y, w.get(prefix + ".sep2.dw.weight"), ConvParams::square(kernel, 1, pad));
  y = conv2d(y, w.get(prefix + ".sep2.pw.weight"), ConvParams::square(1));
  return w.bn(y, prefix + ".sep2.bn");
}

inline void separable_block_specs(std::vector<WeightSpec>& out, const std::string& prefix,
                                  std::size_t in_ch, std::size_t out_ch, int kernel) {
  const auto k = static_cast<std::size_t>(kernel);
  add_conv_spec(out, prefix + ".sep1.dw.weight", in_ch, 1, k);
  add_conv_spec(out, prefix + ".sep1.pw.weight", out_ch, in_ch, 1);
  add_bn_specs(out, prefix + ".sep1.bn", out_ch);
  add_conv_spec(out, prefix + ".sep2.dw.weight", out_ch, 1, k);
  add_conv_spec(out, prefix + ".sep2.pw.weight", out_ch, out_ch, 1);
  add_bn_specs(out, prefix + ".sep2.bn", out_ch);
}

/// Halves the resolution of `x` while mapping it to `out_ch` channels.
inline Tensor factorized_reduction(const Tensor& x, const WeightView& w,
                                   const std::string& prefix) {
  const Tensor r = relu(x);
  const Tensor p1 = conv2d(subsample2(r, 0), w.get(prefix + ".path1.conv.weight"),
                           ConvParams::square(1));
  const Tensor p2 = conv2d(subsample2(r, 1), w.get(prefix + ".path2.conv.weight"),
                           ConvParams::square(1));
  return w.bn(concat_channels({p1, p2}), prefix + ".bn");
}

inline void factorized_reduction_specs(std::vector<WeightSpec>& out, const std::string& prefix,
                                       std::size_t in_ch, std::size_t out_ch) {
  add_conv_spec(out, prefix + ".path1.conv.weight", out_ch / 2, in_ch, 1);
  add_conv_spec(out, prefix + ".path2.conv.weight", out_ch - out_ch / 2, in_ch, 1);
  add_bn_specs(out, prefix + ".bn", out_ch);
}

/// Evaluates a NASNet-A normal or reduction cell described by `cell`.
inline Tensor nas_cell(const Tensor& h, const Tensor& h_prev_in, const WeightView& w,
                       const NasCellSpec& cell) {
  const Tensor& h_prev = cell.single_input ? h : h_prev_in;
  const Tensor right =
      conv_bn(relu(h), w, cell.name + ".adjust_h", ConvParams::square(1), false);
  Tensor left;
  switch (cell.prev_adjust) {
    case PrevAdjust::kNone:
      left = h_prev;
      break;
    case PrevAdjust::kConv1x1:
      left = conv_bn(relu(h_prev), w, cell.name + ".adjust_prev", ConvParams::square(1), false);
      break;
    case PrevAdjust::kFactorized:
      left = factorized_reduction(h_prev, w, cell.name + ".adjust_prev");
      break;
  }
  const Shape& ls = left.shape();
  const Shape& rs = right.shape();
  if (ls.n != rs.n || ls.h != rs.h || ls.w != rs.w ||
      (cell.prev_adjust != PrevAdjust::kNone && ls.c != rs.c)) {
    throw std::logic_error(cell.name + ": adjusted inputs disagree (" + ls.str() + " vs " +
                           rs.str() + ")");
  }

  const NasCellPlan& plan = cell.plan();
  std::vector<Tensor> operands{left, right};
  operands.reserve(2 + plan.combines.size());
  auto apply = [&](const NasBranch& b, std::size_t combine, char side) -> Tensor {
    const Tensor& x = operands.at(static_cast<std::size_t>(b.input));
    const int stride = plan.reduction && b.input < 2 ? 2 : 1;
    switch (b.op) {
      case NasOp::kSep3:
      case NasOp::kSep5:
      case NasOp::kSep7:
        return separable_block(x, w, detail::branch_prefix(cell, combine, side),
                               separable_kernel(b.op), stride);
      case NasOp::kAvg3: return avg_pool2d(x, {3, stride, 1});
      case NasOp::kMax3: return max_pool2d(x, {3, stride, 1});
      case NasOp::kIdentity:
        if (stride != 1) throw std::logic_error(cell.name + ": strided identity branch");
        return x;
    }
    throw std::logic_error("unknown NasOp");
  };
  for (std::size_t i = 0; i < plan.combines.size(); ++i) {
    const NasCombine& c = plan.combines[i];
    operands.push_back(add(apply(c.a, i, 'a'), apply(c.b, i, 'b')));
  }
  std::vector<Tensor> parts;
  for (int idx : plan.outputs) parts.push_back(operands.at(static_cast<std::size_t>(idx)));
  return concat_channels(parts);
}

inline void nas_cell_specs(std::vector<WeightSpec>& out, const NasCellSpec& cell) {
  conv_bn_specs(out, cell.name + ".adjust_h", cell.h_channels, cell.width, 1);
  if (cell.prev_adjust == PrevAdjust::kConv1x1) {
    conv_bn_specs(out, cell.name + ".adjust_prev", cell.prev_channels, cell.width, 1);
  } else if (cell.prev_adjust == PrevAdjust::kFactorized) {
    factorized_reduction_specs(out, cell.name + ".adjust_prev", cell.prev_channels, cell.width);
  }
  const NasCellPlan& plan = cell.plan();
  for (std::size_t i = 0; i < plan.combines.size(); ++i) {
    const NasCombine& c = plan.combines[i];
    for (const auto& [branch, side] : {std::pair{c.a, 'a'}, std::pair{c.b, 'b'}}) {
      if (int k = separable_kernel(branch.op)) {
        separable_block_specs(out, detail::branch_prefix(cell, i, side),
                              detail::operand_channels(cell, branch.input), cell.width, k);
      }
    }
  }
}

}  // namespace onfire
