#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "ttlift/uplift/checkpoint.hpp"
#include "ttlift/uplift/grad_check.hpp"
#include "ttlift/uplift/model.hpp"

namespace ttlift::uplift {

InputFrame input_frame(const SynthSample& sample) {
  if (sample.image_w <= 0 || sample.image_h <= 0) throw DataError("sample: image size must be positive");
  Vec2 sum = Vec2::Zero();
  int count = 0;
  for (const auto& p : sample.keypoints.points) {
    if (!p) continue;
    sum += *p;
    ++count;
  }
  InputFrame f;
  if (count >= 2) {
    f.origin = sum / count;
    double sq = 0.0;
    for (const auto& p : sample.keypoints.points)
      if (p) sq += (*p - f.origin).squaredNorm();
    f.scale = std::sqrt(sq / count);
  }
  if (count < 2 || !(f.scale > 1e-6 * sample.image_w)) {
    f.origin = Vec2(0.5 * sample.image_w, 0.5 * sample.image_h);
    f.scale = static_cast<double>(sample.image_w);
  }
  return f;
}

UpliftInput make_input(const SynthSample& sample, std::vector<std::size_t>* frame_index) {
  const InputFrame frame = input_frame(sample);
  UpliftInput in;
  if (frame_index) frame_index->clear();
  for (std::size_t i = 0; i < sample.size(); ++i) {
    if (!sample.ball_valid[i]) continue;
    in.times_s.push_back(sample.times_s[i]);
    in.ball.push_back(frame.apply(sample.ball2d_px[i]));
    if (frame_index) frame_index->push_back(i);
  }
  for (std::size_t k = 0; k < kNumTableKeypoints; ++k) {
    const auto& p = sample.keypoints.points[k];
    if (p) in.keypoints.emplace_back(static_cast<int>(k), frame.apply(*p));
  }
  return in;
}

double uplift_loss(std::span<const Vec3> pred_positions, const Vec3& pred_spin,
                   std::span<const Vec3> true_positions, const Vec3& true_spin,
                   const LossWeights& weights, double spin_scale) {
  if (pred_positions.size() != true_positions.size())
    throw ContractError("uplift loss: prediction and truth lengths differ");
  if (pred_positions.empty()) throw ContractError("uplift loss: empty trajectory");
  if (!(spin_scale > 0.0)) throw ContractError("uplift loss: spin_scale must be > 0");
  double sq = 0.0;
  for (std::size_t i = 0; i < pred_positions.size(); ++i)
    sq += (pred_positions[i] - true_positions[i]).squaredNorm();
  const double traj = sq / static_cast<double>(pred_positions.size());
  const double spin = ((pred_spin - true_spin) / spin_scale).squaredNorm();
  return weights.trajectory * traj + weights.spin * spin;
}

namespace {

double sample_loss(const UpliftModel<double>& model, const UpliftInput& input,
                   std::span<const Vec3> truth, const Vec3& spin, const LossWeights& w) {
  const UpliftOutput out = model.forward(input);
  return uplift_loss(out.positions, out.spin, truth, spin, w, model.config().spin_scale);
}

}  // namespace

GradCheckResult grad_check(UpliftModel<double>& model, const UpliftInput& input,
                           std::span<const Vec3> true_positions, const Vec3& true_spin,
                           double epsilon, std::size_t n_coords, std::uint64_t seed,
                           const LossWeights& weights, double abs_floor) {
  if (!(epsilon > 0.0)) throw ContractError("grad_check: epsilon must be > 0");
  model.zero_grad();
  model.accumulate_gradients(input, true_positions, true_spin, weights);

  std::vector<std::pair<std::string, Param<double>*>> params;
  model.visit([&](const std::string& name, Param<double>& p) { params.emplace_back(name, &p); });

  GradCheckResult result;
  double norm_sq = 0.0;
  for (const auto& [name, p] : params) norm_sq += p->grad.squaredNorm();
  result.gradient_norm = std::sqrt(norm_sq);

  // One coordinate per tensor first, then uniform over all coordinates.
  std::mt19937_64 rng(derive_seed(seed, 0x6763u));
  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  std::vector<double> sizes;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Eigen::Index n = params[i].second->value.size();
    coords.emplace_back(i, std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
    sizes.push_back(static_cast<double>(n));
  }
  std::discrete_distribution<std::size_t> pick(sizes.begin(), sizes.end());
  while (coords.size() < n_coords) {
    const std::size_t i = pick(rng);
    const Eigen::Index n = params[i].second->value.size();
    coords.emplace_back(i, std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  }

  for (const auto& [i, c] : coords) {
    Param<double>& p = *params[i].second;
    double& x = p.value.data()[c];
    const double saved = x;
    x = saved + epsilon;
    const double up = sample_loss(model, input, true_positions, true_spin, weights);
    x = saved - epsilon;
    const double down = sample_loss(model, input, true_positions, true_spin, weights);
    x = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = p.grad.data()[c];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
    const double rel = std::abs(analytic - numeric) / denom;
    if (result.worst_parameter.empty() || rel > result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = params[i].first;
    }
  }
  result.coordinates = coords.size();
  return result;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr char kMagic[8] = {'T', 'T', 'L', 'I', 'F', 'T', '0', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint64_t get_u64(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t;
  return nullptr;
}

nlohmann::json to_json(const ModelConfig& cfg) {
  return {{"d", cfg.d},
          {"layers", cfg.layers},
          {"heads", cfg.heads},
          {"embed_blocks", cfg.embed_blocks},
          {"spin_blocks", cfg.spin_blocks},
          {"mlp_ratio", cfg.mlp_ratio},
          {"head_layers", cfg.head_layers},
          {"delta_t", cfg.delta_t},
          {"rope_base", cfg.rope_base},
          {"spin_scale", cfg.spin_scale},
          {"init_seed", cfg.init_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  try {
    cfg.d = j.at("d").get<int>();
    cfg.layers = j.at("layers").get<int>();
    cfg.heads = j.at("heads").get<int>();
    cfg.embed_blocks = j.at("embed_blocks").get<int>();
    cfg.spin_blocks = j.at("spin_blocks").get<int>();
    cfg.mlp_ratio = j.at("mlp_ratio").get<int>();
    cfg.head_layers = j.at("head_layers").get<int>();
    cfg.delta_t = j.at("delta_t").get<double>();
    cfg.rope_base = j.at("rope_base").get<double>();
    cfg.spin_scale = j.at("spin_scale").get<double>();
    cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad model config: ") + e.what());
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  return cfg;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = "ttlift-checkpoint";
  header["version"] = 1;
  header["model"] = to_json(ckpt.model);
  header["tensors"] = nlohmann::json::array();
  std::size_t values = 0;
  for (const auto& t : ckpt.tensors) {
    header["tensors"].push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
    values += static_cast<std::size_t>(t.value.size());
  }
  header["meta"] = ckpt.meta;
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, text.size());
  out += text;
  out.reserve(out.size() + values * sizeof(double));
  static_assert(sizeof(double) == 8);
  for (const auto& t : ckpt.tensors) {
    for (Eigen::Index i = 0; i < t.value.size(); ++i) {
      std::uint64_t bits;
      const double v = t.value.data()[i];
      std::memcpy(&bits, &v, sizeof(bits));
      put_u64(out, bits);
    }
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
    throw DataError("checkpoint: bad magic");
  const std::uint64_t hlen = get_u64(bytes, 8);
  if (hlen > bytes.size() - 16) throw DataError("checkpoint: truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: bad header: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.model = model_config_from_json(header.at("model"));
  if (header.contains("meta")) ckpt.meta = header["meta"];
  std::size_t at = 16 + hlen;
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0) throw DataError("checkpoint: negative tensor shape");
    NamedTensor nt{t.at("name").get<std::string>(), Eigen::MatrixXd(rows, cols)};
    const auto n = static_cast<std::size_t>(rows * cols);
    if (bytes.size() < at + 8 * n) throw DataError("checkpoint: truncated tensor data");
    for (std::size_t i = 0; i < n; ++i, at += 8) {
      const std::uint64_t bits = get_u64(bytes, at);
      std::memcpy(nt.value.data() + i, &bits, sizeof(bits));
    }
    ckpt.tensors.push_back(std::move(nt));
  }
  if (at != bytes.size()) throw DataError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace ttlift::uplift
