#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gravity/autodiff.hpp"
#include "gravity/tensor.hpp"

namespace gravity {

struct Param {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor first_moment;
  Tensor second_moment;
};

/// Named parameter tensors with gradient slots and Adam state.
class ParamStore {
 public:
  /// Adds a parameter; throws if the name is taken.
  Tensor& add(const std::string& name, Tensor value);
  /// Adds a rows x cols parameter drawn uniformly from
  /// [-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))].
  Tensor& add_glorot(const std::string& name, std::size_t rows, std::size_t cols,
                     std::mt19937_64& rng);

  bool contains(const std::string& name) const;
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return at(name).value; }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;

  std::uint64_t step_count() const { return steps_; }
  void set_step_count(std::uint64_t steps) { steps_ = steps; }

  /// Registers every parameter as a variable on `tape`, in store order.
  std::vector<ad::Var> attach(ad::Tape& tape) const;
  /// Adds the tape gradients of `vars` (from attach) into the grad slots.
  void pull_grads(std::span<const ad::Var> vars);
  void zero_grads();

  /// Parameters only; gradients and moments are ignored.
  bool same_values(const ParamStore& other) const;

 private:
  std::vector<Param> params_;
  std::uint64_t steps_ = 0;
};

struct AdamOptions {
  double lr = 0.01;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam step with bias correction. Weight decay is decoupled: every
/// parameter first shrinks by lr * weight_decay * theta, then takes the Adam
/// delta. Gradients are zeroed afterwards.
void adam_step(ParamStore& params, const AdamOptions& opt);

/// Builds a scalar loss on the tape from the attached parameter variables.
using TapeLoss = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = false;
};

/// Compares every analytic gradient entry with a central finite difference.
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
/// Throws ValidationError if two evaluations at the same point disagree.
GradCheckReport grad_check(const TapeLoss& loss, const ParamStore& params, double step,
                           double tolerance);

/// Versioned binary format: magic, version, named tensors with shapes and
/// little-endian float64 payloads, trailing CRC-32 over all preceding bytes.
void save_params(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_params(const std::filesystem::path& path);
std::string serialize_params(const ParamStore& params);
ParamStore deserialize_params(const std::string& bytes);

inline constexpr std::uint32_t kParamFormatVersion = 1;

}  // namespace gravity
