#include "xnap/model.hpp"

#include <algorithm>

namespace xnap {

ModelShape ModelShape::for_spec(const EncodingSpec& spec, bool self_explaining, Index hidden, double dropout) {
  ModelShape s;
  s.activities = spec.activity_count();
  s.steps = spec.steps;
  s.hidden = hidden;
  s.dropout = dropout;
  s.self_explaining = self_explaining;
  return s;
}

Eigen::MatrixXf grids_to_flat(std::span<const Grid> grids) {
  if (grids.empty()) return {};
  const Index n = grids.front().size();
  Eigen::MatrixXf flat(n, static_cast<Index>(grids.size()));
  for (std::size_t j = 0; j < grids.size(); ++j) {
    require_shape(grids[j].size() == n, "grids_to_flat: grids differ in shape");
    flat.col(static_cast<Index>(j)) = Eigen::Map<const Eigen::VectorXf>(grids[j].data(), n);
  }
  return flat;
}

Eigen::MatrixXf instances_to_flat(std::span<const EncodedInstance> instances) {
  std::vector<const EncodedInstance*> ptrs;
  ptrs.reserve(instances.size());
  for (const auto& inst : instances) ptrs.push_back(&inst);
  return instances_to_flat(std::span<const EncodedInstance* const>(ptrs));
}

Eigen::MatrixXf instances_to_flat(std::span<const EncodedInstance* const> instances) {
  if (instances.empty()) return {};
  const Index n = instances.front()->x.size();
  Eigen::MatrixXf flat(n, static_cast<Index>(instances.size()));
  for (std::size_t j = 0; j < instances.size(); ++j) {
    require_shape(instances[j]->x.size() == n, "instances_to_flat: instances differ in shape");
    flat.col(static_cast<Index>(j)) = Eigen::Map<const Eigen::VectorXf>(instances[j]->x.data(), n);
  }
  return flat;
}

ForwardOutputs<float> infer(const NapModelParams<float>& p, const Eigen::MatrixXf& flat, bool explanation_head,
                            bool time_head) {
  const Matrix<float> seq = flat_to_sequence<float>(flat, p.shape.steps, p.shape.width());
  ForwardOptions opt;
  opt.mode = Mode::infer;
  opt.time_head = time_head;
  opt.explanation_head = explanation_head;
  return forward(p, seq, opt, nullptr);
}

Classifier make_classifier(std::shared_ptr<const NapModelParams<float>> params, Index chunk) {
  return [params = std::move(params), chunk](const Eigen::MatrixXf& flat) {
    std::vector<Index> out;
    out.reserve(static_cast<std::size_t>(flat.cols()));
    for (Index start = 0; start < flat.cols(); start += chunk) {
      const Index n = std::min(chunk, flat.cols() - start);
      const auto outputs = infer(*params, flat.middleCols(start, n), false, false);
      const auto classes = predict_classes(outputs.nap_probs);
      out.insert(out.end(), classes.begin(), classes.end());
    }
    return out;
  };
}

}  // namespace xnap
