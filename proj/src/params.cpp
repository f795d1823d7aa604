#include "gravity/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <zlib.h>

namespace gravity {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ValidationError("duplicate parameter name: " + name);
  Param p;
  p.name = name;
  p.grad = Tensor(value.rows(), value.cols());
  p.first_moment = Tensor(value.rows(), value.cols());
  p.second_moment = Tensor(value.rows(), value.cols());
  p.value = std::move(value);
  params_.push_back(std::move(p));
  return params_.back().value;
}

Tensor& ParamStore::add_glorot(const std::string& name, std::size_t rows, std::size_t cols,
                               std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return add(name, std::move(t));
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Param& p) { return p.name == name; });
}

Param& ParamStore::at(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ValidationError("unknown parameter: " + name);
}

const Param& ParamStore::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ValidationError("unknown parameter: " + name);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<ad::Var> ParamStore::attach(ad::Tape& tape) const {
  std::vector<ad::Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.variable(p.value));
  return vars;
}

void ParamStore::pull_grads(std::span<const ad::Var> vars) {
  if (vars.size() != params_.size()) throw ValidationError("pull_grads: variable count mismatch");
  for (std::size_t k = 0; k < vars.size(); ++k) {
    const Tensor& g = vars[k].grad();
    require_same_shape(params_[k].grad, g, "pull_grads");
    for (std::size_t i = 0; i < g.size(); ++i) params_[k].grad[i] += g[i];
  }
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p.grad.fill(0.0);
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (params_[k].name != other.params_[k].name) return false;
    if (!(params_[k].value == other.params_[k].value)) return false;
  }
  return true;
}

void adam_step(ParamStore& params, const AdamOptions& opt) {
  if (!(opt.lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (opt.weight_decay < 0.0) throw ValidationError("weight decay must be non-negative");
  params.set_step_count(params.step_count() + 1);
  const double t = static_cast<double>(params.step_count());
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  for (auto& p : params.params()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      double& m = p.first_moment[i];
      double& v = p.second_moment[i];
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * g * g;
      double theta = p.value[i];
      theta -= opt.lr * opt.weight_decay * theta;
      theta -= opt.lr * (m / c1) / (std::sqrt(v / c2) + opt.eps);
      if (!std::isfinite(theta)) throw NumericError("non-finite parameter after Adam step: " + p.name);
      p.value[i] = theta;
    }
  }
  params.zero_grads();
}

namespace {

double evaluate(const TapeLoss& loss, const ParamStore& params) {
  ad::Tape tape;
  auto vars = params.attach(tape);
  return loss(tape, vars).value()(0, 0);
}

}  // namespace

GradCheckReport grad_check(const TapeLoss& loss, const ParamStore& params, double step,
                           double tolerance) {
  if (!(step > 0.0)) throw ValidationError("grad_check step must be positive");

  ad::Tape tape;
  auto vars = params.attach(tape);
  ad::Var out = loss(tape, vars);
  const double base = out.value()(0, 0);
  if (evaluate(loss, params) != base) {
    throw ValidationError("grad_check: loss function is not deterministic");
  }
  tape.backward(out);

  GradCheckReport report;
  ParamStore probe = params;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& analytic = vars[k].grad();
    Tensor& theta = probe.params()[k].value;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double saved = theta[i];
      theta[i] = saved + step;
      const double up = evaluate(loss, probe);
      theta[i] = saved - step;
      const double down = evaluate(loss, probe);
      theta[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++report.entries_checked;
      if (report.worst_param.empty() || rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params.params()[k].name;
        report.worst_index = i;
        report.analytic = analytic[i];
        report.numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

namespace {

constexpr char kMagic[8] = {'G', 'R', 'V', 'P', 'A', 'R', 'A', 'M'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes, std::size_t limit) : bytes_(bytes), limit_(limit) {}

  std::uint64_t get(int width) {
    if (pos_ + width > limit_) throw ValidationError("parameter file truncated");
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    pos_ += width;
    return v;
  }
  std::string get_bytes(std::size_t n) {
    if (pos_ + n > limit_) throw ValidationError("parameter file truncated");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t limit_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t len) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(len)));
}

}  // namespace

std::string serialize_params(const ParamStore& params) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, kParamFormatVersion);
  put_u64(out, params.step_count());
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params.params()) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out += p.name;
    put_u32(out, 2);
    put_u64(out, p.value.rows());
    put_u64(out, p.value.cols());
    for (double v : p.value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  put_u32(out, crc_of(out, out.size()));
  return out;
}

ParamStore deserialize_params(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + 4 + 4 ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError("not a parameter file (bad magic)");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int b = 0; b < 4; ++b)
    stored |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[body + b])) << (8 * b);
  if (stored != crc_of(bytes, body)) throw ValidationError("parameter file checksum mismatch");

  Reader in(bytes, body);
  in.get_bytes(sizeof(kMagic));
  const auto version = static_cast<std::uint32_t>(in.get(4));
  if (version != kParamFormatVersion) {
    throw ValidationError(fmt::format("parameter file version {} unsupported (expected {})",
                                      version, kParamFormatVersion));
  }
  ParamStore store;
  store.set_step_count(in.get(8));
  const auto count = in.get(4);
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name = in.get_bytes(in.get(4));
    const auto ndim = in.get(4);
    if (ndim != 2) throw ValidationError("parameter tensors must be rank 2");
    const auto rows = in.get(8);
    const auto cols = in.get(8);
    Tensor t(rows, cols);
    for (double& v : t.data()) v = std::bit_cast<double>(in.get(8));
    store.add(name, std::move(t));
  }
  if (in.pos() != body) throw ValidationError("trailing bytes in parameter file");
  return store;
}

void save_params(const ParamStore& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  const auto bytes = serialize_params(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

ParamStore load_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_params(ss.str());
}

}  // namespace gravity
