#include "catintell/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "catintell/error.hpp"

namespace catintell {

namespace {

constexpr char kMagic[] = "CATCKPT1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs are little-endian");

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a.value;
  }
  fail(ErrorKind::NotFound, "checkpoint has no array " + name);
}

void Checkpoint::put(const std::string& name, const Tensor& value) {
  for (auto& a : arrays) {
    if (a.name == name) {
      a.value = value;
      return;
    }
  }
  arrays.push_back({name, value});
}

void Checkpoint::put_params(const std::string& prefix, const ParamStore& params) {
  for (const auto& p : params.items()) put(prefix + p.name, p.var->value);
}

void Checkpoint::load_params(const std::string& prefix, ParamStore& params) const {
  for (const auto& p : params.items()) {
    const Tensor& t = array(prefix + p.name);
    if (!(t.shape() == p.var->value.shape())) {
      fail(ErrorKind::ShapeError, "checkpoint array " + prefix + p.name + " has shape " + t.shape().str() +
                                      ", model expects " + p.var->value.shape().str());
    }
    p.var->value = t;
  }
}

bool Checkpoint::has_params(const std::string& prefix, const ParamStore& params) const {
  for (const auto& p : params.items()) {
    if (!has(prefix + p.name)) return false;
  }
  return !params.items().empty();
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json table = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& a : ckpt.arrays) {
    const Shape s = a.value.shape();
    const std::uint64_t nbytes = a.value.size() * sizeof(double);
    table.push_back({{"name", a.name},
                     {"dtype", "f64"},
                     {"shape", {s.n, s.c, s.h, s.w}},
                     {"offset", offset},
                     {"nbytes", nbytes}});
    offset += nbytes;
  }
  nlohmann::json header = {{"format", "catintell-checkpoint"},
                           {"version", 1},
                           {"phase", ckpt.phase},
                           {"step", ckpt.step},
                           {"config", ckpt.config},
                           {"rng", ckpt.rng_state},
                           {"arrays", table}};
  const std::string text = header.dump();
  std::string out(kMagic, kMagicLen);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& a : ckpt.arrays) {
    out.append(reinterpret_cast<const char*>(a.value.raw()), a.value.size() * sizeof(double));
  }
  return out;
}

Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin) {
  auto corrupt = [&](const std::string& why) -> void {
    fail(ErrorKind::DecodeError, origin + ": " + why);
  };
  if (bytes.size() < kMagicLen + sizeof(std::uint64_t) || bytes.compare(0, kMagicLen, kMagic) != 0) {
    corrupt("not a checkpoint");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kMagicLen, sizeof(len));
  const std::size_t body = kMagicLen + sizeof(len);
  if (len > bytes.size() - body) corrupt("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(body, len));
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("bad header: ") + e.what());
  }
  const std::size_t blob = body + len;
  Checkpoint ckpt;
  try {
    ckpt.phase = header.at("phase").get<std::string>();
    ckpt.step = header.at("step").get<std::int64_t>();
    ckpt.config = header.at("config");
    ckpt.rng_state = header.at("rng").get<std::string>();
    for (const auto& entry : header.at("arrays")) {
      if (entry.at("dtype").get<std::string>() != "f64") corrupt("unsupported dtype");
      const auto dims = entry.at("shape").get<std::vector<int>>();
      if (dims.size() != 4) corrupt("array shape must have four dimensions");
      const Shape s{dims[0], dims[1], dims[2], dims[3]};
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
      if (nbytes != s.numel() * sizeof(double)) corrupt("array size does not match its shape");
      if (offset > bytes.size() - blob || nbytes > bytes.size() - blob - offset) corrupt("truncated array data");
      std::vector<double> values(s.numel());
      std::memcpy(values.data(), bytes.data() + blob + offset, nbytes);
      ckpt.arrays.push_back({entry.at("name").get<std::string>(), Tensor(s, std::move(values))});
    }
  } catch (const nlohmann::json::exception& e) {
    corrupt(std::string("bad header field: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(ckpt);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::IoError, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::IoError, "cannot write " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::IoError, "cannot move checkpoint into " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::NotFound, "no such checkpoint: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes, path.string());
}

}  // namespace catintell
