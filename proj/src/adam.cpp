#include "kaa/adam.hpp"

#include <cmath>

namespace kaa {

std::size_t ParameterStore::add(std::string name, Tensor value) {
  params_.push_back(Parameter{std::move(name), std::move(value)});
  return params_.size() - 1;
}

Index ParameterStore::scalar_count() const {
  Index n = 0;
  for (const Parameter& p : params_) n += p.value.size();
  return n;
}

std::vector<ad::Var> ParameterStore::bind(ad::Tape& tape) const {
  std::vector<ad::Var> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back(tape.parameter(p.value));
  return out;
}

std::vector<Tensor> ParameterStore::gradients(const ad::Tape& tape,
                                              const std::vector<ad::Var>& bound) const {
  std::vector<Tensor> out;
  out.reserve(bound.size());
  for (const ad::Var& v : bound) out.push_back(tape.grad(v));
  return out;
}

AdamState AdamState::for_parameters(const ParameterStore& params) {
  AdamState s;
  for (const Parameter& p : params) {
    s.first_moment.push_back(Tensor::Zero(p.value.rows(), p.value.cols()));
    s.second_moment.push_back(Tensor::Zero(p.value.rows(), p.value.cols()));
  }
  return s;
}

void adam_step(ParameterStore& params, const std::vector<Tensor>& grads, AdamState& state,
               double lr, double weight_decay) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw ShapeError("adam_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " +
                     std::to_string(state.first_moment.size()) + " moment slots");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& w = params[i].value;
    if (grads[i].rows() != w.rows() || grads[i].cols() != w.cols()) {
      throw ShapeError("adam_step: gradient " + shape_string(grads[i]) + " for parameter '" +
                       params[i].name + "' of shape " + shape_string(w));
    }
    if (!grads[i].allFinite()) throw DivergenceError(params[i].name);
  }

  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].value;
    const Tensor g = grads[i] + weight_decay * w;
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
    const Tensor m_hat = m / c1;
    const Tensor v_hat = v / c2;
    w.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + state.epsilon);
  }
}

}  // namespace kaa
