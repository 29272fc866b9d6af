#include <bit>
#include <cstring>
#include <string>

#include <json.hpp>

#include "chaneq/ce_block.hpp"
#include "chaneq/error.hpp"

namespace chaneq {

namespace {

constexpr char kMagic[4] = {'C', 'E', 'Q', '1'};

const char* const kArrayNames[] = {"gamma",   "beta",    "lambda_raw",       "W1",
                                   "ln_gain", "ln_bias", "W2",               "running_inv_sqrt",
                                   "running_s_inv_sqrt", "running_mean", "running_var", "settings"};

class Writer {
 public:
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.append(s); }
  void array(std::string_view name, std::span<const double> values) {
    u64(name.size());
    bytes(name);
    u64(values.size());
    for (double v : values) f64(v);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Vector array(std::string_view expected) {
    const auto len = u64();
    if (bytes(len) != expected) {
      throw ContractError("checkpoint: expected array '" + std::string(expected) + "'");
    }
    const auto count = u64();
    if (count > (in_.size() - pos_) / 8) throw ContractError("checkpoint: truncated array");
    Vector v(count);
    for (double& x : v) x = f64();
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw ContractError("checkpoint: truncated input");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

Vector settings_of(const CEState& s) {
  return {static_cast<double>(s.hidden()),
          static_cast<double>(static_cast<int>(s.norm)),
          s.norm_eps,
          s.ln_eps,
          s.momentum,
          s.newton.diag_eps,
          s.newton.trace_normalize ? 1.0 : 0.0,
          s.newton.rescale ? 1.0 : 0.0,
          static_cast<double>(s.newton.pool_threshold),
          s.has_running ? 1.0 : 0.0,
          static_cast<double>(static_cast<int>(s.mode)),
          static_cast<double>(static_cast<int>(s.branches)),
          s.freeze_lambda ? 1.0 : 0.0,
          s.freeze_ir ? 1.0 : 0.0};
}

constexpr std::size_t kSettingsLength = 14;

template <class E>
E enum_from(double v, int max) {
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v || i < 0 || i > max) {
    throw ContractError("checkpoint: enum value out of range");
  }
  return static_cast<E>(i);
}

void apply_settings(CEState& s, const Vector& st) {
  if (st.size() != kSettingsLength) throw ContractError("checkpoint: settings length");
  s.norm = enum_from<NormKind>(st[1], 2);
  s.norm_eps = st[2];
  s.ln_eps = st[3];
  s.momentum = st[4];
  s.newton.diag_eps = st[5];
  s.newton.trace_normalize = st[6] != 0.0;
  s.newton.rescale = st[7] != 0.0;
  s.newton.pool_threshold = static_cast<std::size_t>(st[8]);
  s.has_running = st[9] != 0.0;
  s.mode = enum_from<Mode>(st[10], 1);
  s.branches = enum_from<Branches>(st[11], 2);
  s.freeze_lambda = st[12] != 0.0;
  s.freeze_ir = st[13] != 0.0;
}

Matrix reshape(Vector v, std::size_t rows, std::size_t cols, const char* name) {
  if (v.size() != rows * cols) {
    throw ContractError(std::string("checkpoint: wrong size for ") + name);
  }
  return Matrix(rows, cols, std::move(v));
}

void expect_length(const Vector& v, std::size_t n, const char* name) {
  if (v.size() != n) throw ContractError(std::string("checkpoint: wrong size for ") + name);
}

/// Arrays in serialization order.
std::vector<Vector> arrays_of(const CEState& s) {
  return {s.gamma,
          s.beta,
          {s.lambda_raw},
          s.ir.w1.values(),
          s.ir.ln_gain,
          s.ir.ln_bias,
          s.ir.w2.values(),
          s.running_inv_sqrt.values(),
          {s.running_s_inv_sqrt},
          s.running_mean,
          s.running_var,
          settings_of(s)};
}

CEState assemble(std::size_t c, std::size_t r, std::size_t t, std::size_t g,
                 std::vector<Vector> a) {
  CEState s;
  s.channels = c;
  s.reduction = r;
  s.newton.iterations = static_cast<int>(t);
  s.group_size = g;
  apply_settings(s, a[11]);
  const auto h = static_cast<std::size_t>(a[11][0]);
  expect_length(a[0], c, "gamma");
  expect_length(a[1], c, "beta");
  expect_length(a[2], 1, "lambda_raw");
  expect_length(a[4], h, "ln_gain");
  expect_length(a[5], h, "ln_bias");
  expect_length(a[8], 1, "running_s_inv_sqrt");
  s.gamma = std::move(a[0]);
  s.beta = std::move(a[1]);
  s.lambda_raw = a[2][0];
  s.ir.w1 = reshape(std::move(a[3]), h, c, "W1");
  s.ir.ln_gain = std::move(a[4]);
  s.ir.ln_bias = std::move(a[5]);
  s.ir.w2 = reshape(std::move(a[6]), c, h, "W2");
  s.running_inv_sqrt = reshape(std::move(a[7]), c, c, "running_inv_sqrt");
  s.running_s_inv_sqrt = a[8][0];
  s.running_mean = std::move(a[9]);
  s.running_var = std::move(a[10]);
  s.validate();
  return s;
}

}  // namespace

std::string to_binary(const CEState& state) {
  state.validate();
  Writer w;
  w.bytes(std::string_view(kMagic, 4));
  w.u64(state.channels);
  w.u64(state.reduction);
  w.u64(static_cast<std::uint64_t>(state.newton.iterations));
  w.u64(state.group_size);
  const auto arrays = arrays_of(state);
  for (std::size_t i = 0; i < arrays.size(); ++i) w.array(kArrayNames[i], arrays[i]);
  return w.take();
}

CEState from_binary(std::string_view bytes) {
  Reader r(bytes);
  if (r.bytes(4) != std::string_view(kMagic, 4)) throw ContractError("checkpoint: bad magic");
  const auto c = r.u64();
  const auto red = r.u64();
  const auto t = r.u64();
  const auto g = r.u64();
  if (c == 0 || c > (1u << 20) || t == 0 || t > 1000) {
    throw ContractError("checkpoint: implausible header");
  }
  std::vector<Vector> arrays;
  for (const char* name : kArrayNames) arrays.push_back(r.array(name));
  if (!r.done()) throw ContractError("checkpoint: trailing bytes");
  return assemble(c, red, t, g, std::move(arrays));
}

std::string to_json(const CEState& state) {
  state.validate();
  nlohmann::ordered_json j;
  j["C"] = state.channels;
  j["r"] = state.reduction;
  j["T"] = state.newton.iterations;
  j["g"] = state.group_size;
  const auto arrays = arrays_of(state);
  for (std::size_t i = 0; i < arrays.size(); ++i) j[kArrayNames[i]] = arrays[i];
  return j.dump(1);
}

CEState from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    std::vector<Vector> arrays;
    for (const char* name : kArrayNames) arrays.push_back(j.at(name).get<Vector>());
    return assemble(j.at("C").get<std::size_t>(), j.at("r").get<std::size_t>(),
                    j.at("T").get<std::size_t>(), j.at("g").get<std::size_t>(), std::move(arrays));
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("checkpoint json: ") + e.what());
  }
}

}  // namespace chaneq
