#include "lrpabn/alignment.hpp"

#include <cmath>

#include "lrpabn/ops.hpp"

namespace lrpabn {

void add_alignment_params(ModelParams& params, std::size_t positions, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(positions));
  params.add("align.fc1.weight", uniform_tensor({positions, positions}, bound, rng));
  params.add("align.fc1.bias", uniform_tensor({positions}, bound, rng));
  params.add("align.fc2.weight", Tensor({positions * positions, positions}, 0.0));
  Tensor identity({positions * positions}, 0.0);
  for (std::size_t i = 0; i < positions; ++i) identity[i * positions + i] = 1.0;
  params.add("align.fc2.bias", std::move(identity));
}

Var generate_transforms(ParamBinding& bind, Var support) {
  const Shape& s = support.shape();
  if (s.size() != 3) throw ShapeError("generate_transforms: support must be [b,c,hw], got " + to_string(s));
  const std::size_t batch = s[0], hw = s[2];
  const Shape& w1 = bind.params().get("align.fc1.weight").value.shape();
  if (w1[1] != hw) {
    throw ShapeError("generate_transforms: generator expects hw=" + std::to_string(w1[1]) + ", got " +
                     std::to_string(hw));
  }
  Var descriptor = ops::sum_axis(support, 1);  // [b,hw]
  Var hidden = ops::relu(ops::linear(descriptor, bind("align.fc1.weight"), bind("align.fc1.bias")));
  Var flat = ops::linear(hidden, bind("align.fc2.weight"), bind("align.fc2.bias"));
  return ops::reshape(flat, {batch, hw, hw});
}

Var apply_alignment(Var support, Var transforms) {
  const Shape& s = support.shape();
  const Shape& t = transforms.shape();
  if (s.size() != 3 || t.size() != 3 || t[1] != s[2] || t[2] != s[2] || t[0] != s[0]) {
    throw ShapeError("apply_alignment: support " + to_string(s) + " incompatible with transforms " +
                     to_string(t));
  }
  return ops::matmul(support, transforms);
}

Var orthogonality_penalty(Var transforms) {
  const Shape& t = transforms.shape();
  if (t.size() != 3 || t[1] != t[2]) {
    throw ShapeError("orthogonality_penalty: transforms must be [b,hw,hw], got " + to_string(t));
  }
  Tensor identity(t, 0.0);
  for (std::size_t b = 0; b < t[0]; ++b)
    for (std::size_t i = 0; i < t[1]; ++i) identity[(b * t[1] + i) * t[1] + i] = 1.0;
  Tape& tape = *transforms.tape();
  Var gram = ops::matmul(transforms, transforms, true);
  Var dev = ops::sub(gram, tape.constant(std::move(identity)));
  return ops::scale(ops::sum(ops::hadamard(dev, dev)), 1.0 / static_cast<double>(t[0]));
}

Var align_loss_niv(Var query, Var aligned_support) { return ops::mse(query, aligned_support); }

Var align_loss_cpt_descriptors(Var query, Var transformed_support_descriptor) {
  return ops::mse(ops::sum_axis(query, 1), transformed_support_descriptor);
}

Var align_loss_cpt(Var query, Var support, Var transforms) {
  if (query.shape() != support.shape()) {
    throw ShapeError("align_loss_cpt: query " + to_string(query.shape()) + " vs support " +
                     to_string(support.shape()));
  }
  const Shape& s = support.shape();
  Var desc = ops::reshape(ops::sum_axis(support, 1), {s[0], 1, s[2]});
  Var moved = ops::reshape(ops::matmul(desc, transforms), {s[0], s[2]});
  return align_loss_cpt_descriptors(query, moved);
}

Var align_loss_cosine(Var query, Var aligned_support) {
  const Shape& s = query.shape();
  if (s != aligned_support.shape()) {
    throw ShapeError("align_loss_cosine: shapes differ, " + to_string(s) + " vs " +
                     to_string(aligned_support.shape()));
  }
  const std::size_t rows = s[0];
  const std::size_t width = query.value().size() / rows;
  Var cos = ops::row_cosine(ops::reshape(query, {rows, width}), ops::reshape(aligned_support, {rows, width}));
  // mean(1 - cos) = 1 - sum(cos)/rows
  Tape& tape = *query.tape();
  Var mean_cos = ops::scale(ops::sum(cos), 1.0 / static_cast<double>(rows));
  return ops::sub(tape.constant(Tensor::scalar(1.0)), mean_cos);
}

// ---------------------------------------------------------------------------

namespace {
Tensor as_batch(const FeatureMap& m) {
  return m.values().reshaped({1, m.channels(), m.positions()});
}
}  // namespace

AlignmentTransform generate_transform(const ModelParams& params, const FeatureMap& support) {
  Tape tape;
  ParamBinding bind(tape, params);
  Var t = generate_transforms(bind, tape.constant(as_batch(support)));
  const std::size_t hw = support.positions();
  return {t.value().reshaped({hw, hw}), orthogonality_penalty(t).value()[0]};
}

double orthogonality_penalty(const Tensor& transform) {
  if (transform.rank() != 2) throw ShapeError("orthogonality_penalty: expected [hw,hw]");
  Tape tape;
  Var t = tape.constant(transform.reshaped({1, transform.dim(0), transform.dim(1)}));
  return orthogonality_penalty(t).value()[0];
}

FeatureMap apply_alignment(const FeatureMap& support, const Tensor& transform) {
  if (transform.rank() != 2) throw ShapeError("apply_alignment: expected [hw,hw] transform");
  Tape tape;
  Var out = apply_alignment(tape.constant(as_batch(support)),
                            tape.constant(transform.reshaped({1, transform.dim(0), transform.dim(1)})));
  return FeatureMap(out.value().reshaped({support.channels(), support.positions()}));
}

double align_loss_niv(const FeatureMap& query, const FeatureMap& aligned_support) {
  Tape tape;
  return align_loss_niv(tape.constant(as_batch(query)), tape.constant(as_batch(aligned_support))).value()[0];
}

double align_loss_cpt(const FeatureMap& query, const FeatureMap& support, const Tensor& transform) {
  if (transform.rank() != 2) throw ShapeError("align_loss_cpt: expected [hw,hw] transform");
  Tape tape;
  return align_loss_cpt(tape.constant(as_batch(query)), tape.constant(as_batch(support)),
                        tape.constant(transform.reshaped({1, transform.dim(0), transform.dim(1)})))
      .value()[0];
}

double align_loss_cosine(const FeatureMap& query, const FeatureMap& aligned_support) {
  Tape tape;
  return align_loss_cosine(tape.constant(as_batch(query)), tape.constant(as_batch(aligned_support))).value()[0];
}

}  // namespace lrpabn
