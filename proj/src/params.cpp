#include "vagpo/params.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vagpo {

namespace {

constexpr char kMagic[4] = {'V', 'G', 'P', 'C'};
constexpr std::uint32_t kVersion = 1;

void write_bytes(std::ostream& out, const void* data, std::size_t size) {
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

void read_bytes(std::istream& in, void* data, std::size_t size) {
  in.read(static_cast<char*>(data), static_cast<std::streamsize>(size));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
}

}  // namespace

Mat& ParamStore::create(const std::string& name, int rows, int cols,
                        const std::function<void(Mat&)>& init) {
  if (index_.count(name) > 0) throw std::invalid_argument("duplicate parameter name: " + name);
  index_[name] = entries_.size();
  Entry e;
  e.name = name;
  e.value = Mat::Zero(rows, cols);
  if (init) init(e.value);
  e.grad = Mat::Zero(rows, cols);
  e.adam_m = Mat::Zero(rows, cols);
  e.adam_v = Mat::Zero(rows, cols);
  entries_.push_back(std::move(e));
  return entries_.back().value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return entries_[it->second];
}

const ParamStore::Entry& ParamStore::entry(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("unknown parameter: " + name);
  return entries_[it->second];
}

void ParamStore::zero_grads() {
  for (auto& e : entries_) e.grad.setZero();
}

std::size_t ParamStore::total_size() const {
  std::size_t total = 0;
  for (const auto& e : entries_) total += static_cast<std::size_t>(e.value.size());
  return total;
}

std::vector<double> ParamStore::flatten_values() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& e : entries_)
    flat.insert(flat.end(), e.value.data(), e.value.data() + e.value.size());
  return flat;
}

void ParamStore::set_values(const std::vector<double>& flat) {
  if (flat.size() != total_size())
    throw std::invalid_argument("flat vector size does not match parameter count");
  std::size_t offset = 0;
  for (auto& e : entries_) {
    std::memcpy(e.value.data(), flat.data() + offset,
                static_cast<std::size_t>(e.value.size()) * sizeof(double));
    offset += static_cast<std::size_t>(e.value.size());
  }
}

std::vector<double> ParamStore::flatten_grads() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& e : entries_)
    flat.insert(flat.end(), e.grad.data(), e.grad.data() + e.grad.size());
  return flat;
}

void AdamOptimizer::step(ParamStore& store) {
  t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (auto& e : store.entries()) {
    // L2-style decay: the penalty gradient joins the raw gradient before the
    // moment updates.
    Mat g = e.grad + weight_decay * e.value;
    e.adam_m = beta1 * e.adam_m + (1.0 - beta1) * g;
    e.adam_v = beta2 * e.adam_v + (1.0 - beta2) * g.cwiseProduct(g);
    Mat m_hat = e.adam_m / bc1;
    Mat v_hat = e.adam_v / bc2;
    e.value.array() -= lr * m_hat.array() / (v_hat.array().sqrt() + eps);
  }
}

void save_checkpoint(const std::string& path, const ParamStore& store, const Checkpoint& meta) {
  nlohmann::json header;
  header["step"] = meta.step;
  header["config"] = meta.config;
  header["has_optimizer_state"] = meta.has_optimizer_state;
  header["adam"] = {{"lr", meta.adam.lr},
                    {"beta1", meta.adam.beta1},
                    {"beta2", meta.adam.beta2},
                    {"eps", meta.adam.eps},
                    {"weight_decay", meta.adam.weight_decay},
                    {"t", meta.adam.t}};
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : store.entries()) {
    params.push_back({{"name", e.name},
                      {"rows", static_cast<long long>(e.value.rows())},
                      {"cols", static_cast<long long>(e.value.cols())}});
  }
  header["params"] = params;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  write_bytes(out, kMagic, sizeof(kMagic));
  write_bytes(out, &kVersion, sizeof(kVersion));
  const std::uint64_t header_len = header_str.size();
  write_bytes(out, &header_len, sizeof(header_len));
  write_bytes(out, header_str.data(), header_str.size());
  for (const auto& e : store.entries()) {
    write_bytes(out, e.value.data(), static_cast<std::size_t>(e.value.size()) * sizeof(double));
    if (meta.has_optimizer_state) {
      write_bytes(out, e.adam_m.data(), static_cast<std::size_t>(e.adam_m.size()) * sizeof(double));
      write_bytes(out, e.adam_v.data(), static_cast<std::size_t>(e.adam_v.size()) * sizeof(double));
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  read_bytes(in, magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  std::uint32_t version = 0;
  read_bytes(in, &version, sizeof(version));
  if (version != kVersion) throw std::runtime_error("checkpoint: unsupported version");
  std::uint64_t header_len = 0;
  read_bytes(in, &header_len, sizeof(header_len));
  std::string header_str(header_len, '\0');
  read_bytes(in, header_str.data(), header_len);
  nlohmann::json header = nlohmann::json::parse(header_str);

  Checkpoint meta;
  meta.step = header.at("step").get<long long>();
  meta.config = header.value("config", nlohmann::json::object());
  meta.has_optimizer_state = header.value("has_optimizer_state", false);
  if (header.contains("adam")) {
    const auto& a = header["adam"];
    meta.adam.lr = a.value("lr", meta.adam.lr);
    meta.adam.beta1 = a.value("beta1", meta.adam.beta1);
    meta.adam.beta2 = a.value("beta2", meta.adam.beta2);
    meta.adam.eps = a.value("eps", meta.adam.eps);
    meta.adam.weight_decay = a.value("weight_decay", meta.adam.weight_decay);
    meta.adam.t = a.value("t", meta.adam.t);
  }

  const bool populate = store.entries().empty();
  for (const auto& p : header.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    const int rows = p.at("rows").get<int>();
    const int cols = p.at("cols").get<int>();
    ParamStore::Entry* e = nullptr;
    if (populate) {
      store.create(name, rows, cols, nullptr);
      e = &store.entry(name);
    } else {
      e = &store.entry(name);
      if (e->value.rows() != rows || e->value.cols() != cols)
        throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
    read_bytes(in, e->value.data(), static_cast<std::size_t>(e->value.size()) * sizeof(double));
    if (meta.has_optimizer_state) {
      read_bytes(in, e->adam_m.data(), static_cast<std::size_t>(e->adam_m.size()) * sizeof(double));
      read_bytes(in, e->adam_v.data(), static_cast<std::size_t>(e->adam_v.size()) * sizeof(double));
    }
  }
  return meta;
}

}  // namespace vagpo
