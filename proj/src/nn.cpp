#include "latentseq/nn.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace latentseq::nn {

using namespace ndgrad;

namespace {
int numel(const std::vector<int>& shape) {
  int n = 1;
  for (int d : shape) n *= d;
  return n;
}
}  // namespace

Value ParamStore::add(const std::string& name, std::vector<int> shape,
                      util::Rng& rng, double scale) {
  if (has(name)) throw std::invalid_argument("ParamStore: duplicate " + name);
  std::uniform_real_distribution<double> ud(-scale, scale);
  std::vector<double> data(numel(shape));
  for (auto& v : data) v = ud(rng);
  Value p = Value::leaf(std::move(shape), std::move(data), true);
  params_.emplace_back(name, p);
  return p;
}

Value ParamStore::add_zeros(const std::string& name, std::vector<int> shape) {
  if (has(name)) throw std::invalid_argument("ParamStore: duplicate " + name);
  Value p = Value::leaf(shape, std::vector<double>(numel(shape), 0.0), true);
  params_.emplace_back(name, p);
  return p;
}

Value ParamStore::get(const std::string& name) const {
  for (const auto& [n, v] : params_)
    if (n == name) return v;
  throw std::out_of_range("ParamStore: missing " + name);
}

bool ParamStore::has(const std::string& name) const {
  for (const auto& [n, v] : params_)
    if (n == name) return true;
  return false;
}

std::size_t ParamStore::n_parameters() const {
  std::size_t n = 0;
  for (const auto& [name, v] : params_) n += v.data().size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : params_) v.zero_grad();
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& [name, v] : params_) out.push_back(v.data());
  return out;
}

// ---------------------------------------------------------------------------

GruParams make_gru(ParamStore& store, const std::string& prefix, int in_dim,
                   int hidden, util::Rng& rng) {
  GruParams g;
  g.wz = store.add(prefix + ".wz", {hidden, in_dim}, rng);
  g.uz = store.add(prefix + ".uz", {hidden, hidden}, rng);
  g.bz = store.add_zeros(prefix + ".bz", {hidden});
  g.wr = store.add(prefix + ".wr", {hidden, in_dim}, rng);
  g.ur = store.add(prefix + ".ur", {hidden, hidden}, rng);
  g.br = store.add_zeros(prefix + ".br", {hidden});
  g.wh = store.add(prefix + ".wh", {hidden, in_dim}, rng);
  g.uh = store.add(prefix + ".uh", {hidden, hidden}, rng);
  g.bh = store.add_zeros(prefix + ".bh", {hidden});
  return g;
}

Value gru_step(const GruParams& g, const Value& h_prev, const Value& x) {
  Value z = vsigmoid(add(add(matvec(g.wz, x), matvec(g.uz, h_prev)), g.bz));
  Value r = vsigmoid(add(add(matvec(g.wr, x), matvec(g.ur, h_prev)), g.br));
  Value h_cand =
      vtanh(add(add(matvec(g.wh, x), matvec(g.uh, mul(r, h_prev))), g.bh));
  Value keep = add_const(neg(z), 1.0);
  return add(mul(keep, h_prev), mul(z, h_cand));
}

// ---------------------------------------------------------------------------

Adam::Adam(std::vector<Value> params, double lr, double beta1, double beta2,
           double eps, double clip_norm)
    : params_(std::move(params)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      clip_(clip_norm) {
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].data().size(), 0.0);
    v_[i].assign(params_[i].data().size(), 0.0);
  }
}

void Adam::step() {
  double scale = 1.0;
  if (clip_ > 0.0) {
    double norm_sq = 0.0;
    for (auto& p : params_)
      for (double g : p.grad()) norm_sq += g * g;
    double norm = std::sqrt(norm_sq);
    if (norm > clip_) scale = clip_ / norm;
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& data = params_[i].data();
    auto& grad = params_[i].grad();
    for (std::size_t j = 0; j < data.size(); ++j) {
      double g = grad[j] * scale;
      m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
      v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
      double mhat = m_[i][j] / bc1;
      double vhat = v_[i][j] / bc2;
      data[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
    std::fill(grad.begin(), grad.end(), 0.0);
  }
}

std::vector<Value> values_of(const ParamStore& store) {
  std::vector<Value> out;
  out.reserve(store.all().size());
  for (const auto& [name, v] : store.all()) out.push_back(v);
  return out;
}

std::vector<Value> values_of(std::initializer_list<const ParamStore*> stores) {
  std::vector<Value> out;
  for (const ParamStore* s : stores)
    for (const auto& [name, v] : s->all()) out.push_back(v);
  return out;
}

void sgd_step(ParamStore& store, double lr, bool ascend) {
  auto& params = const_cast<std::vector<std::pair<std::string, Value>>&>(store.all());
  double sign = ascend ? 1.0 : -1.0;
  for (auto& [name, p] : params) {
    auto& data = p.data();
    auto& grad = p.grad();
    for (std::size_t j = 0; j < data.size(); ++j)
      data[j] += sign * lr * grad[j];
  }
  store.zero_grad();
}

// ---------------------------------------------------------------------------

void save_checkpoint(const ParamStore& store, const std::string& path_prefix,
                     const std::string& extra_json) {
  nlohmann::json manifest;
  manifest["format"] = "latentseq-checkpoint-v1";
  manifest["dtype"] = "float64-le";
  auto tensors = nlohmann::json::array();

  std::ofstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("save_checkpoint: cannot open " + path_prefix + ".bin");
  std::uint64_t offset = 0;
  for (const auto& [name, p] : store.all()) {
    nlohmann::json t;
    t["name"] = name;
    t["shape"] = p.shape();
    t["offset"] = offset;
    tensors.push_back(t);
    bin.write(reinterpret_cast<const char*>(p.data().data()),
              static_cast<std::streamsize>(p.data().size() * sizeof(double)));
    offset += p.data().size() * sizeof(double);
  }
  manifest["tensors"] = tensors;
  manifest["total_bytes"] = offset;
  if (!extra_json.empty()) manifest["extra"] = nlohmann::json::parse(extra_json);

  std::ofstream js(path_prefix + ".json");
  if (!js) throw std::runtime_error("save_checkpoint: cannot open " + path_prefix + ".json");
  js << manifest.dump(2) << "\n";
}

std::string load_checkpoint(ParamStore& store, const std::string& path_prefix) {
  std::ifstream js(path_prefix + ".json");
  if (!js) throw std::runtime_error("load_checkpoint: missing manifest " + path_prefix + ".json");
  nlohmann::json manifest = nlohmann::json::parse(js);
  if (manifest.value("format", "") != "latentseq-checkpoint-v1")
    throw std::runtime_error("load_checkpoint: unknown checkpoint format");

  std::ifstream bin(path_prefix + ".bin", std::ios::binary);
  if (!bin) throw std::runtime_error("load_checkpoint: missing archive " + path_prefix + ".bin");

  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != store.all().size())
    throw std::runtime_error("load_checkpoint: tensor count mismatch");
  for (const auto& t : tensors) {
    std::string name = t.at("name");
    Value p = store.get(name);
    std::vector<int> shape = t.at("shape").get<std::vector<int>>();
    if (shape != p.shape())
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    bin.seekg(static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
    bin.read(reinterpret_cast<char*>(p.data().data()),
             static_cast<std::streamsize>(p.data().size() * sizeof(double)));
    if (!bin) throw std::runtime_error("load_checkpoint: truncated archive at " + name);
  }
  return manifest.contains("extra") ? manifest["extra"].dump() : std::string("{}");
}

std::string read_checkpoint_extra(const std::string& path_prefix) {
  std::ifstream js(path_prefix + ".json");
  if (!js) throw std::runtime_error("read_checkpoint_extra: missing manifest");
  nlohmann::json manifest = nlohmann::json::parse(js);
  return manifest.contains("extra") ? manifest["extra"].dump() : std::string("{}");
}

}  // namespace latentseq::nn
