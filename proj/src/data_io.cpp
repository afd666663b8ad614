#include "tensorshield/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "tensorshield/rng.hpp"

namespace fs = std::filesystem;

namespace ts {

void shuffle_dataset(LabeledDataset& ds, std::uint64_t seed) {
    std::vector<std::size_t> perm(ds.size());
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    Rng rng(mix_seed(seed ^ 0x5481ULL));
    rng.shuffle(perm);
    LabeledDataset out;
    out.class_count = ds.class_count;
    out.images.reserve(ds.size());
    out.labels.reserve(ds.size());
    out.ids.reserve(ds.size());
    for (std::size_t i : perm) {
        out.images.push_back(std::move(ds.images[i]));
        out.labels.push_back(ds.labels[i]);
        out.ids.push_back(ds.ids[i]);
    }
    ds = std::move(out);
}

namespace {

std::uint32_t read_u32_be(std::ifstream& f, const std::string& path) {
    unsigned char b[4];
    if (!f.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("idx: truncated header: " + path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

LabeledDataset load_idx(const std::string& image_path, const std::string& label_path) {
    std::ifstream imf(image_path, std::ios::binary);
    if (!imf) throw std::runtime_error("idx: cannot open: " + image_path);
    const std::uint32_t im_magic = read_u32_be(imf, image_path);
    if (im_magic != 0x00000803) {
        char msg[128];
        std::snprintf(msg, sizeof msg,
                      "idx: bad image magic 0x%08x (expected 0x00000803): ", im_magic);
        throw std::runtime_error(msg + image_path);
    }
    const std::uint32_t count = read_u32_be(imf, image_path);
    const std::uint32_t rows = read_u32_be(imf, image_path);
    const std::uint32_t cols = read_u32_be(imf, image_path);
    if (rows == 0 || cols == 0) throw std::runtime_error("idx: zero image dims: " + image_path);

    std::ifstream lbf(label_path, std::ios::binary);
    if (!lbf) throw std::runtime_error("idx: cannot open: " + label_path);
    const std::uint32_t lb_magic = read_u32_be(lbf, label_path);
    if (lb_magic != 0x00000801) {
        char msg[128];
        std::snprintf(msg, sizeof msg,
                      "idx: bad label magic 0x%08x (expected 0x00000801): ", lb_magic);
        throw std::runtime_error(msg + label_path);
    }
    const std::uint32_t lb_count = read_u32_be(lbf, label_path);
    if (lb_count != count)
        throw std::runtime_error("idx: image/label count mismatch between " + image_path +
                                 " and " + label_path);

    LabeledDataset ds;
    const std::size_t pixels = std::size_t(rows) * cols;
    std::vector<unsigned char> buf(pixels);
    ds.images.reserve(count);
    ds.labels.reserve(count);
    ds.ids.reserve(count);
    std::size_t max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        if (!imf.read(reinterpret_cast<char*>(buf.data()),
                      static_cast<std::streamsize>(pixels)))
            throw std::runtime_error("idx: truncated image data: " + image_path);
        Tensor t({rows, cols, 1});
        for (std::size_t p = 0; p < pixels; ++p) t.data[p] = buf[p] / 255.0;
        unsigned char label;
        if (!lbf.read(reinterpret_cast<char*>(&label), 1))
            throw std::runtime_error("idx: truncated label data: " + label_path);
        ds.images.push_back(std::move(t));
        ds.labels.push_back(label);
        ds.ids.push_back(i);
        max_label = std::max<std::size_t>(max_label, label);
    }
    ds.class_count = max_label + 1;
    return ds;
}

namespace {

double bump(double d, double s) { return std::exp(-(d * d) / (2.0 * s * s)); }

// Smooth class-conditioned field over centered coordinates (u, v), each
// roughly in [-1.25, 1.25]. Ten visually distinct low-frequency shapes.
double class_field(std::size_t cls, double u, double v) {
    switch (cls % 10) {
        case 0: return bump(std::sqrt(u * u + v * v) - 0.55, 0.18);
        case 1: return bump(u, 0.16);
        case 2: return bump(v, 0.16);
        case 3: return bump((u + v) * 0.7071067811865476, 0.14);
        case 4: return bump((u - v) * 0.7071067811865476, 0.14);
        case 5: return std::max(bump(u - 0.45, 0.13), bump(u + 0.45, 0.13));
        case 6: return std::max(bump(v - 0.45, 0.13), bump(v + 0.45, 0.13));
        case 7: return bump(std::sqrt(u * u + v * v), 0.30);
        case 8: {
            double best = 0.0;
            for (int sy = -1; sy <= 1; sy += 2)
                for (int sx = -1; sx <= 1; sx += 2)
                    best = std::max(best, bump(std::hypot(u - 0.5 * sx, v - 0.5 * sy), 0.22));
            return best;
        }
        default: return std::max(bump(u, 0.13), bump(v, 0.13));
    }
}

// Class tint for multi-channel images; grayscale uses 1.0.
const double kPalette[10][3] = {
    {1.00, 0.45, 0.45}, {0.45, 1.00, 0.45}, {0.45, 0.45, 1.00}, {1.00, 1.00, 0.40},
    {1.00, 0.45, 1.00}, {0.40, 1.00, 1.00}, {1.00, 0.70, 0.40}, {0.60, 0.40, 1.00},
    {0.70, 1.00, 0.60}, {0.85, 0.85, 0.85},
};

// Fixed +/-1 texture per class; a function of the class index only so every
// dataset built at any seed shares the same patterns.
std::vector<double> class_texture(std::size_t cls, std::size_t h, std::size_t w,
                                  std::size_t c) {
    Rng rng(mix_seed(0x7e47u ^ (cls * 0x9e37ULL)));
    std::vector<double> pat(h * w * c);
    for (double& p : pat) p = rng.uniform01() < 0.5 ? -1.0 : 1.0;
    return pat;
}

}  // namespace

LabeledDataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t classes) {
    return synth_dataset(seed, n, classes, SynthOptions{});
}

LabeledDataset synth_dataset(std::uint64_t seed, std::size_t n, std::size_t classes,
                             const SynthOptions& opts) {
    if (classes < 1 || classes > 10)
        throw std::invalid_argument("synth_dataset: classes must be in [1,10]");
    if (n < classes) throw std::invalid_argument("synth_dataset: need n >= classes");
    const std::size_t h = opts.height, w = opts.width, c = opts.channels;
    if (c != 1 && c != 3) throw std::invalid_argument("synth_dataset: channels must be 1 or 3");

    std::vector<std::vector<double>> textures(classes);
    for (std::size_t k = 0; k < classes; ++k) textures[k] = class_texture(k, h, w, c);

    LabeledDataset ds;
    ds.class_count = classes;
    ds.images.reserve(n);
    ds.labels.reserve(n);
    ds.ids.reserve(n);
    const std::uint64_t base = mix_seed(seed ^ 0x5B7A11ULL);

    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = i % classes;
        Rng rng(mix_seed(base ^ (i * 0x9e3779b97f4a7c15ULL + 1)));
        const double amp = rng.uniform(opts.amplitude_lo, opts.amplitude_hi);
        const double span = 2.0 * opts.max_shift + 1.0;
        const double dx = std::floor(rng.uniform01() * span) - opts.max_shift;
        const double dy = std::floor(rng.uniform01() * span) - opts.max_shift;
        const double scale =
            rng.uniform(opts.scale_lo, opts.scale_hi) * 0.4 * static_cast<double>(std::min(h, w));
        const bool textured = rng.uniform01() < opts.texture_probability;
        const bool scrambled = textured && opts.texture_scramble_probability > 0.0 &&
                               rng.uniform01() < opts.texture_scramble_probability;
        std::vector<double> scramble;
        if (scrambled) {
            scramble.resize(h * w * c);
            for (double& p : scramble) p = rng.uniform01() < 0.5 ? -1.0 : 1.0;
        }
        std::size_t texture_cls = cls;
        if (textured && !scrambled && classes > 1 && opts.texture_lie_probability > 0.0 &&
            rng.uniform01() < opts.texture_lie_probability) {
            const auto hop = static_cast<std::size_t>(rng.uniform01() *
                                                      static_cast<double>(classes - 1));
            texture_cls = (cls + 1 + hop) % classes;
        }
        std::size_t shape_cls = cls;
        if (textured && !scrambled && classes > 1 && opts.shape_swap_probability > 0.0 &&
            rng.uniform01() < opts.shape_swap_probability) {
            const auto hop = static_cast<std::size_t>(rng.uniform01() *
                                                      static_cast<double>(classes - 1));
            shape_cls = (cls + 1 + hop) % classes;
        }
        const double cx = 0.5 * static_cast<double>(w - 1) + dx;
        const double cy = 0.5 * static_cast<double>(h - 1) + dy;

        Tensor img({h, w, c});
        for (std::size_t y = 0; y < h; ++y) {
            const double v = (static_cast<double>(y) - cy) / scale;
            for (std::size_t x = 0; x < w; ++x) {
                const double u = (static_cast<double>(x) - cx) / scale;
                const double f = class_field(shape_cls, u, v);
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double tint = (c == 3) ? kPalette[shape_cls % 10][ch] : 1.0;
                    double px = opts.background + amp * f * tint;
                    if (textured)
                        px += opts.texture_amplitude *
                              (scrambled ? scramble[(y * w + x) * c + ch]
                                         : textures[texture_cls][(y * w + x) * c + ch]);
                    px += opts.noise_sigma * rng.gaussian();
                    img.data[(y * w + x) * c + ch] = std::clamp(px, 0.0, 1.0);
                }
            }
        }
        ds.images.push_back(std::move(img));
        ds.labels.push_back(cls);
        ds.ids.push_back(i);
    }
    return ds;
}

std::uint64_t fnv1a64(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < bytes; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

namespace {

std::vector<unsigned char> tensor_payload(const Tensor& t) {
    std::vector<unsigned char> bytes(t.numel() * 8);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &t.data[i], 8);
        for (int b = 0; b < 8; ++b)
            bytes[i * 8 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
    }
    return bytes;
}

Tensor tensor_from_payload(const std::vector<unsigned char>& bytes,
                           const std::vector<std::size_t>& shape, const std::string& file) {
    if (bytes.size() != shape_numel(shape) * 8)
        throw std::runtime_error("batch: payload size mismatch: " + file);
    Tensor t(shape);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
        std::memcpy(&t.data[i], &bits, 8);
    }
    return t;
}

std::string checksum_hex(const std::vector<unsigned char>& bytes) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(bytes.data(), bytes.size())));
    return buf;
}

}  // namespace

void save_tensor_batch(const TensorBatch& batch, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json index;
    index["format"] = "tensorshield-batch";
    index["version"] = 1;
    index["config"] = batch.config.is_null() ? nlohmann::json::object() : batch.config;
    nlohmann::json items = nlohmann::json::array();
    for (std::size_t i = 0; i < batch.items.size(); ++i) {
        const BatchItem& item = batch.items[i];
        char name[32];
        std::snprintf(name, sizeof name, "%06zu.f64", i);
        const std::vector<unsigned char> payload = tensor_payload(item.tensor);
        const fs::path file = fs::path(dir) / name;
        std::ofstream f(file, std::ios::binary | std::ios::trunc);
        if (!f) throw std::runtime_error("batch: cannot write: " + file.string());
        f.write(reinterpret_cast<const char*>(payload.data()),
                static_cast<std::streamsize>(payload.size()));
        if (!f) throw std::runtime_error("batch: write failed: " + file.string());

        nlohmann::json j;
        j["file"] = name;
        j["shape"] = item.tensor.shape;
        j["dtype"] = "f64le";
        j["id"] = item.id;
        j["label"] = item.label;
        j["attack"] = item.attack;
        j["success"] = item.success;
        j["linf"] = item.linf;
        j["l2"] = item.l2;
        j["checksum"] = checksum_hex(payload);
        items.push_back(std::move(j));
    }
    index["items"] = std::move(items);
    const fs::path index_path = fs::path(dir) / "index.json";
    std::ofstream f(index_path, std::ios::trunc);
    if (!f) throw std::runtime_error("batch: cannot write: " + index_path.string());
    f << index.dump(2) << "\n";
}

TensorBatch load_tensor_batch(const std::string& dir) {
    const fs::path index_path = fs::path(dir) / "index.json";
    std::ifstream f(index_path);
    if (!f) throw std::runtime_error("batch: cannot open: " + index_path.string());
    nlohmann::json index = nlohmann::json::parse(f, nullptr, false);
    if (index.is_discarded())
        throw std::runtime_error("batch: malformed JSON: " + index_path.string());
    if (index.value("format", "") != "tensorshield-batch")
        throw std::runtime_error("batch: unrecognized format tag: " + index_path.string());

    TensorBatch batch;
    batch.config = index.value("config", nlohmann::json::object());
    std::set<std::string> listed;
    for (const nlohmann::json& j : index.at("items")) {
        BatchItem item;
        const std::string name = j.at("file").get<std::string>();
        listed.insert(name);
        const fs::path file = fs::path(dir) / name;
        std::ifstream pf(file, std::ios::binary);
        if (!pf) throw std::runtime_error("batch: missing payload: " + file.string());
        std::vector<unsigned char> payload((std::istreambuf_iterator<char>(pf)),
                                           std::istreambuf_iterator<char>());
        if (j.value("dtype", "") != "f64le")
            throw std::runtime_error("batch: unsupported dtype: " + file.string());
        if (j.contains("checksum") && j.at("checksum").get<std::string>() != checksum_hex(payload))
            throw std::runtime_error("batch: checksum mismatch: " + file.string());
        item.tensor =
            tensor_from_payload(payload, j.at("shape").get<std::vector<std::size_t>>(),
                                file.string());
        item.id = j.value("id", std::uint64_t{0});
        item.label = j.value("label", std::size_t{0});
        item.attack = j.value("attack", "");
        item.success = j.value("success", false);
        item.linf = j.value("linf", 0.0);
        item.l2 = j.value("l2", 0.0);
        batch.items.push_back(std::move(item));
    }
    for (const fs::directory_entry& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".f64" && !listed.count(e.path().filename().string()))
            throw std::runtime_error("batch: file not listed in index: " + e.path().string());
    }
    return batch;
}

namespace {

void write_netpbm(const Tensor& t, const std::string& path, bool color) {
    if (t.order() != 3) throw std::invalid_argument("netpbm: tensor must be H x W x C");
    const std::size_t h = t.shape[0], w = t.shape[1], c = t.shape[2];
    if (color && c != 3) throw std::invalid_argument("ppm: needs 3 channels");
    if (!color && c != 1) throw std::invalid_argument("pgm: needs 1 channel");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("netpbm: cannot write: " + path);
    f << (color ? "P6" : "P5") << "\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> row(w * c);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t i = 0; i < w * c; ++i) {
            const double v = std::clamp(t.data[y * w * c + i], 0.0, 1.0);
            row[i] = static_cast<unsigned char>(std::lround(v * 255.0));
        }
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size()));
    }
    if (!f) throw std::runtime_error("netpbm: write failed: " + path);
}

}  // namespace

void write_pgm(const Tensor& t, const std::string& path) { write_netpbm(t, path, false); }
void write_ppm(const Tensor& t, const std::string& path) { write_netpbm(t, path, true); }

}  // namespace ts
