#pragma once

#include <string>
#include <vector>

#include "kaa/autodiff.hpp"

namespace kaa {

struct Parameter {
  std::string name;
  Tensor value;
};

/// Owns the learnable tensors of a model. Layers refer to entries by index.
class ParameterStore {
 public:
  std::size_t add(std::string name, Tensor value);

  std::size_t size() const { return params_.size(); }
  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Total number of scalar entries.
  Index scalar_count() const;

  /// Registers every parameter as a leaf on `tape`, in store order.
  std::vector<ad::Var> bind(ad::Tape& tape) const;

  /// Gradients of the bound leaves after tape.backward().
  std::vector<Tensor> gradients(const ad::Tape& tape, const std::vector<ad::Var>& bound) const;

 private:
  std::vector<Parameter> params_;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  long step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Zero moments shaped like `params`.
  static AdamState for_parameters(const ParameterStore& params);
};

/// One bias-corrected Adam update in place. Weight decay enters as an L2
/// gradient term wd * w. Throws DivergenceError on a non-finite gradient;
/// in that case no parameter is modified.
void adam_step(ParameterStore& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double weight_decay);

}  // namespace kaa
