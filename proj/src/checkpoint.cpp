#include "softquad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

namespace softquad {

static_assert(std::endian::native == std::endian::little, "checkpoint payloads are written in host order");

namespace {

constexpr char kMagic[4] = {'S', 'Q', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
enum : std::uint32_t { kNetwork = 0, kScalars = 1 };

class Writer {
 public:
  template <class V>
  void put(V v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf.insert(buf.end(), p, p + sizeof(V));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf.insert(buf.end(), p, p + n);
  }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  Reader(const std::uint8_t* d, std::size_t n) : data(d), size(n) {}
  template <class V>
  V get() {
    V v;
    get_bytes(&v, sizeof(V));
    return v;
  }
  void get_bytes(void* out, std::size_t n) {
    if (pos + n > size) throw CheckpointError("checkpoint truncated");
    std::memcpy(out, data + pos, n);
    pos += n;
  }
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos = 0;
};

}  // namespace

std::uint32_t checksum(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

template <class T>
void Checkpoint<T>::put_network(const std::string& name, const nn::Mlp<T>& net) {
  networks_[name] = net;
}

template <class T>
void Checkpoint<T>::put_scalars(const std::string& name, const std::vector<double>& values) {
  scalars_[name] = values;
}

template <class T>
void Checkpoint<T>::put_adam(const std::string& name, const nn::AdamState<T>& opt, const nn::Mlp<T>& shape) {
  nn::Mlp<T> m = shape, v = shape;
  for (std::size_t i = 0; i < shape.layers().size(); ++i) {
    m.layers()[i].W = opt.m.dW[i];
    m.layers()[i].b = opt.m.db[i];
    v.layers()[i].W = opt.v.dW[i];
    v.layers()[i].b = opt.v.db[i];
  }
  put_network(name + ".m", m);
  put_network(name + ".v", v);
  put_scalars(name + ".meta", {double(opt.step), opt.cfg.lr, opt.cfg.beta1, opt.cfg.beta2, opt.cfg.eps});
}

template <class T>
const nn::Mlp<T>& Checkpoint<T>::network(const std::string& name) const {
  auto it = networks_.find(name);
  if (it == networks_.end()) throw CheckpointError("checkpoint has no network '" + name + "'");
  return it->second;
}

template <class T>
const std::vector<double>& Checkpoint<T>::scalars(const std::string& name) const {
  auto it = scalars_.find(name);
  if (it == scalars_.end()) throw CheckpointError("checkpoint has no scalars '" + name + "'");
  return it->second;
}

template <class T>
nn::AdamState<T> Checkpoint<T>::adam(const std::string& name) const {
  const nn::Mlp<T>& m = network(name + ".m");
  const nn::Mlp<T>& v = network(name + ".v");
  const auto& meta = scalars(name + ".meta");
  if (meta.size() != 5) throw CheckpointError("malformed optimizer record '" + name + "'");
  nn::AdamState<T> s;
  s.step = static_cast<std::int64_t>(meta[0]);
  s.cfg = {meta[1], meta[2], meta[3], meta[4]};
  for (std::size_t i = 0; i < m.layers().size(); ++i) {
    s.m.dW.push_back(m.layers()[i].W);
    s.m.db.push_back(m.layers()[i].b);
    s.v.dW.push_back(v.layers()[i].W);
    s.v.db.push_back(v.layers()[i].b);
  }
  return s;
}

template <class T>
std::vector<std::uint8_t> Checkpoint<T>::serialize() const {
  Writer w;
  w.put_bytes(kMagic, 4);
  w.put(kVersion);
  w.put(static_cast<std::uint32_t>(sizeof(T)));
  w.put(static_cast<std::uint32_t>(networks_.size() + scalars_.size()));
  auto put_name = [&](const std::string& n) {
    w.put(static_cast<std::uint32_t>(n.size()));
    w.put_bytes(n.data(), n.size());
  };
  for (const auto& [name, net] : networks_) {
    put_name(name);
    w.put(static_cast<std::uint32_t>(kNetwork));
    w.put(static_cast<std::uint32_t>(net.layers().size()));
    for (int width : net.widths()) w.put(static_cast<std::uint32_t>(width));
    for (const auto& l : net.layers()) w.put(static_cast<std::uint8_t>(l.act));
    for (const auto& l : net.layers()) {
      w.put_bytes(l.W.data(), sizeof(T) * l.W.size());
      w.put_bytes(l.b.data(), sizeof(T) * l.b.size());
    }
  }
  for (const auto& [name, vals] : scalars_) {
    put_name(name);
    w.put(static_cast<std::uint32_t>(kScalars));
    w.put(static_cast<std::uint32_t>(vals.size()));
    w.put_bytes(vals.data(), sizeof(double) * vals.size());
  }
  w.put(checksum(w.buf.data(), w.buf.size()));
  return w.buf;
}

template <class T>
Checkpoint<T> Checkpoint<T>::deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 20) throw CheckpointError("checkpoint too short");
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (stored != checksum(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch");
  Reader r(bytes.data(), body);
  char magic[4];
  r.get_bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("not a checkpoint file");
  if (r.get<std::uint32_t>() != kVersion) throw CheckpointError("unsupported checkpoint version");
  if (r.get<std::uint32_t>() != sizeof(T)) throw CheckpointError("checkpoint precision does not match");
  const std::uint32_t sections = r.get<std::uint32_t>();
  Checkpoint c;
  for (std::uint32_t s = 0; s < sections; ++s) {
    std::string name(r.get<std::uint32_t>(), '\0');
    r.get_bytes(name.data(), name.size());
    const std::uint32_t kind = r.get<std::uint32_t>();
    if (kind == kNetwork) {
      const std::uint32_t n = r.get<std::uint32_t>();
      if (n == 0 || n > 64) throw CheckpointError("bad layer count in '" + name + "'");
      std::vector<int> widths(n + 1);
      for (int& wd : widths) wd = static_cast<int>(r.get<std::uint32_t>());
      std::vector<nn::Activation> acts(n);
      for (auto& a : acts) {
        const auto id = r.get<std::uint8_t>();
        if (id > 2) throw CheckpointError("unknown activation in '" + name + "'");
        a = static_cast<nn::Activation>(id);
      }
      nn::Mlp<T> net(widths, nn::Activation::Linear, nn::Activation::Linear);
      for (std::uint32_t i = 0; i < n; ++i) {
        auto& l = net.layers()[i];
        l.act = acts[i];
        r.get_bytes(l.W.data(), sizeof(T) * l.W.size());
        r.get_bytes(l.b.data(), sizeof(T) * l.b.size());
      }
      c.networks_[name] = std::move(net);
    } else if (kind == kScalars) {
      std::vector<double> vals(r.get<std::uint32_t>());
      r.get_bytes(vals.data(), sizeof(double) * vals.size());
      c.scalars_[name] = std::move(vals);
    } else {
      throw CheckpointError("unknown section kind in '" + name + "'");
    }
  }
  if (r.pos != body) throw CheckpointError("trailing bytes in checkpoint");
  return c;
}

template <class T>
void Checkpoint<T>::save(const std::string& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw CheckpointError("write failed for " + path);
}

template <class T>
Checkpoint<T> Checkpoint<T>::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot read " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

template class Checkpoint<float>;
template class Checkpoint<double>;

}  // namespace softquad
