#include "semivl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace semivl {

namespace {

constexpr const char* kFormat = "semivl-checkpoint-1";

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

void write_reals(std::ostream& out, std::span<const double> xs) {
  for (double x : xs) {
    const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(x));
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
}

void write_blob(const std::filesystem::path& path, const std::vector<const Tensor*>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  for (const Tensor* t : tensors) write_reals(out, t->data());
  if (!out) throw CheckpointError("write failed for " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void read_blob(const std::filesystem::path& path, const std::vector<Tensor*>& tensors) {
  const std::string bytes = read_file(path);
  std::size_t expected = 0;
  for (const Tensor* t : tensors) expected += t->size() * 8;
  if (bytes.size() != expected) {
    throw CheckpointError(path.string() + ": expected " + std::to_string(expected) + " bytes for the configured architecture, found " +
                          std::to_string(bytes.size()));
  }
  std::size_t off = 0;
  for (Tensor* t : tensors) {
    for (double& x : t->storage()) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, bytes.data() + off, 8);
      x = std::bit_cast<double>(to_le(bits));
      off += 8;
    }
  }
}


}  // namespace

void save_checkpoint(const std::filesystem::path& prefix, const Checkpoint& ckpt) {
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  const auto tensors = ckpt.params.flat();
  write_blob(with_suffix(prefix, ".bin"), tensors);

  KeyValues kv = to_key_values(ckpt.config);
  std::ostringstream head;
  head << "format=" << kFormat << "\n";
  head << "epoch=" << ckpt.epoch << "\n";
  head << "scalars=" << ckpt.params.scalar_count() << "\n";
  head << "bytes=" << ckpt.params.scalar_count() * 8 << "\n";
  if (ckpt.adam) {
    const AdamState& a = *ckpt.adam;
    if (a.m.size() != tensors.size() || a.v.size() != tensors.size()) {
      throw CheckpointError("optimizer state does not match the parameter list");
    }
    head << "adam_step=" << a.step << "\n";
    std::vector<const Tensor*> moments;
    for (const Tensor& t : a.m) moments.push_back(&t);
    for (const Tensor& t : a.v) moments.push_back(&t);
    write_blob(with_suffix(prefix, ".adam.bin"), moments);
  }
  std::ofstream out(with_suffix(prefix, ".manifest"));
  if (!out) throw CheckpointError("cannot write " + with_suffix(prefix, ".manifest").string());
  out << head.str() << "# resolved run configuration\n" << format_key_values(kv);
}

Checkpoint load_checkpoint(const std::filesystem::path& prefix) {
  KeyValues kv = parse_key_values(read_file(with_suffix(prefix, ".manifest")));
  auto take = [&](const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw CheckpointError(prefix.string() + ".manifest: missing key " + key);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  if (take("format") != kFormat) throw CheckpointError(prefix.string() + ".manifest: unknown format");
  Checkpoint c;
  try {
    c.epoch = std::stoi(take("epoch"));
    take("scalars");
    take("bytes");
    std::optional<std::int64_t> adam_step;
    if (kv.count("adam_step")) adam_step = std::stoll(take("adam_step"));
    c.config = apply_key_values(RunConfig{}, kv);
    c.config.arch.validate();
    c.params = init_params(c.config.arch, 0);
    read_blob(with_suffix(prefix, ".bin"), c.params.flat());
    if (adam_step) {
      std::vector<Tensor> shapes;
      for (const Tensor* t : c.params.flat()) shapes.push_back(*t);
      AdamState a = AdamState::for_params(shapes, c.config.train.beta1, c.config.train.beta2, c.config.train.adam_eps);
      a.step = *adam_step;
      std::vector<Tensor*> moments;
      for (Tensor& t : a.m) moments.push_back(&t);
      for (Tensor& t : a.v) moments.push_back(&t);
      read_blob(with_suffix(prefix, ".adam.bin"), moments);
      c.adam = std::move(a);
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(prefix.string() + ": " + e.what());
  }
  return c;
}

}  // namespace semivl
