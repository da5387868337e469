#include "sketchgrasp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sketchgrasp/codec.hpp"

namespace sketchgrasp {

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes little-endian");

namespace {

constexpr char kMagic[8] = {'S', 'K', 'G', 'R', 'C', 'K', 'P', 'T'};
constexpr std::size_t kDigestBytes = 32;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out += s;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    T v;
    std::memcpy(&v, take(sizeof(T), what), sizeof(T));
    return v;
  }
  std::string get_string(const char* what) {
    const auto n = get<std::uint32_t>(what);
    return std::string(take(n, what), n);
  }
  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const Model& model, std::int64_t iteration,
                                 const std::string& train_config_json) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::int64_t>(out, iteration);
  put_string(out, config_to_json(model.config));
  put_string(out, train_config_json);
  const NamedTensors params = model.named_parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    put_string(out, name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    const auto data = t.data();
    out.append(reinterpret_cast<const char*>(data.data()), data.size() * sizeof(float));
  }
  out += sha256(out);
  return out;
}

LoadedCheckpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) + kDigestBytes ||
      std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const std::string_view payload(bytes.data(), bytes.size() - kDigestBytes);
  const std::string stored = bytes.substr(bytes.size() - kDigestBytes);
  if (sha256(payload) != stored) throw CheckpointError("checkpoint digest mismatch");

  Reader r(payload);
  r.take(sizeof(kMagic), "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  LoadedCheckpoint ck;
  ck.iteration = r.get<std::int64_t>("iteration");
  ModelConfig cfg;
  try {
    cfg = config_from_json(r.get_string("model config"));
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint model config: ") + e.what());
  }
  ck.train_config_json = r.get_string("train config");
  ck.model = make_model(cfg, 0);
  NamedTensors params = ck.model.named_parameters();
  const auto count = r.get<std::uint32_t>("record count");
  if (count != params.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (auto& [name, t] : params) {
    const std::string stored_name = r.get_string("tensor name");
    if (stored_name != name) {
      throw CheckpointError("checkpoint tensor '" + stored_name + "' where '" + name +
                            "' was expected");
    }
    Shape shape(r.get<std::uint32_t>("rank"));
    for (int& d : shape) d = static_cast<int>(r.get<std::uint32_t>("dims"));
    if (shape != t.shape()) {
      throw CheckpointError("checkpoint tensor '" + name + "' has shape " + shape_str(shape) +
                            ", model expects " + shape_str(t.shape()));
    }
    auto dst = t.mutable_data();
    std::memcpy(dst.data(), r.take(dst.size() * sizeof(float), "tensor data"),
                dst.size() * sizeof(float));
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint records");
  ck.digest = to_hex(stored);
  return ck;
}

std::string save_checkpoint(const std::filesystem::path& path, const Model& model,
                            std::int64_t iteration, const std::string& train_config_json) {
  const std::string bytes = serialize_checkpoint(model, iteration, train_config_json);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
  return to_hex(bytes.substr(bytes.size() - kDigestBytes));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return deserialize_checkpoint(buf.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

}  // namespace sketchgrasp
