#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensorshield/data_io.hpp"
#include "tensorshield/rng.hpp"

using namespace ts;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void put_u32_be(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

// Minimal IDX pair: `count` images of rows x cols single-byte pixels.
void write_idx_pair(const fs::path& images, const fs::path& labels, std::uint32_t count,
                    std::uint32_t rows, std::uint32_t cols,
                    const std::vector<unsigned char>& pixels,
                    const std::vector<unsigned char>& lab, std::uint32_t image_magic = 0x803,
                    std::uint32_t label_magic = 0x801) {
    std::ofstream im(images, std::ios::binary);
    put_u32_be(im, image_magic);
    put_u32_be(im, count);
    put_u32_be(im, rows);
    put_u32_be(im, cols);
    im.write(reinterpret_cast<const char*>(pixels.data()),
             static_cast<std::streamsize>(pixels.size()));
    std::ofstream lb(labels, std::ios::binary);
    put_u32_be(lb, label_magic);
    put_u32_be(lb, count);
    lb.write(reinterpret_cast<const char*>(lab.data()), static_cast<std::streamsize>(lab.size()));
}

TensorBatch sample_batch() {
    TensorBatch batch;
    Rng rng(33);
    for (std::size_t i = 0; i < 3; ++i) {
        BatchItem item;
        item.tensor = Tensor({4, 3, 1});
        for (double& v : item.tensor.data) v = rng.uniform(0.0, 1.0);
        item.id = 100 + i;
        item.label = i % 2;
        item.attack = "fgsm";
        item.success = i != 1;
        item.linf = 0.03 * static_cast<double>(i);
        item.l2 = 0.5 * static_cast<double>(i);
        batch.items.push_back(std::move(item));
    }
    batch.config["epsilon"] = 0.03;
    return batch;
}

}  // namespace

TEST_CASE("synthetic dataset shape, labels, and ids") {
    LabeledDataset ds = synth_dataset(1, 25, 10);
    REQUIRE(ds.size() == 25);
    CHECK(ds.class_count == 10);
    std::set<std::uint64_t> seen;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(ds.labels[i] == i % 10);
        CHECK(ds.images[i].shape == std::vector<std::size_t>{28, 28, 1});
        for (double v : ds.images[i].data) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        seen.insert(ds.ids[i]);
    }
    CHECK(seen.size() == 25);  // ids are unique
}

TEST_CASE("ten images over ten classes is one image per class") {
    LabeledDataset ds = synth_dataset(2, 10, 10);
    std::set<std::size_t> labels(ds.labels.begin(), ds.labels.end());
    CHECK(labels.size() == 10);
}

TEST_CASE("each image depends on its id, not the dataset size") {
    LabeledDataset small = synth_dataset(7, 20, 10);
    LabeledDataset big = synth_dataset(7, 30, 10);
    for (std::size_t i = 0; i < small.size(); ++i)
        CHECK(max_abs_diff(small.images[i], big.images[i]) == 0.0);
}

TEST_CASE("synthetic dataset is deterministic per seed") {
    LabeledDataset a = synth_dataset(5, 12, 3);
    LabeledDataset b = synth_dataset(5, 12, 3);
    LabeledDataset c = synth_dataset(6, 12, 3);
    double same = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        same += max_abs_diff(a.images[i], b.images[i]);
        diff += max_abs_diff(a.images[i], c.images[i]);
    }
    CHECK(same == 0.0);
    CHECK(diff > 0.0);
}

TEST_CASE("rgb images carry three channels") {
    SynthOptions o;
    o.height = 12;
    o.width = 12;
    o.channels = 3;
    LabeledDataset ds = synth_dataset(9, 6, 3, o);
    CHECK(ds.images[0].shape == std::vector<std::size_t>{12, 12, 3});
}

TEST_CASE("synthetic dataset validates its arguments") {
    CHECK_THROWS_AS(synth_dataset(1, 5, 10), std::invalid_argument);   // n < classes
    CHECK_THROWS_AS(synth_dataset(1, 20, 11), std::invalid_argument);  // too many classes
    SynthOptions o;
    o.channels = 2;
    CHECK_THROWS_AS(synth_dataset(1, 10, 2, o), std::invalid_argument);
}

TEST_CASE("shuffling keeps image-id pairs together") {
    LabeledDataset ds = synth_dataset(11, 15, 3);
    LabeledDataset orig = ds;
    shuffle_dataset(ds, 99);

    bool moved = false;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        if (ds.ids[i] != orig.ids[i]) moved = true;
        std::size_t src = static_cast<std::size_t>(ds.ids[i]);
        CHECK(ds.labels[i] == orig.labels[src]);
        CHECK(max_abs_diff(ds.images[i], orig.images[src]) == 0.0);
    }
    CHECK(moved);

    LabeledDataset again = orig;
    shuffle_dataset(again, 99);
    CHECK(again.ids == ds.ids);  // same permutation for the same seed
}

TEST_CASE("idx loading scales bytes into the unit interval") {
    fs::path dir = temp_dir("idx_ok");
    std::vector<unsigned char> pixels = {0, 51, 102, 153, 204, 255,
                                         255, 204, 153, 102, 51, 0};
    std::vector<unsigned char> labels = {3, 7};
    write_idx_pair(dir / "im", dir / "lb", 2, 2, 3, pixels, labels);

    LabeledDataset ds = load_idx((dir / "im").string(), (dir / "lb").string());
    REQUIRE(ds.size() == 2);
    CHECK(ds.class_count == 8);  // max label + 1
    CHECK(ds.images[0].shape == std::vector<std::size_t>{2, 3, 1});
    CHECK(ds.images[0].at({0, 1, 0}) == doctest::Approx(51.0 / 255.0));
    CHECK(ds.images[1].at({0, 0, 0}) == doctest::Approx(1.0));
    CHECK(ds.labels[0] == 3);
    CHECK(ds.labels[1] == 7);
    CHECK(ds.ids[0] == 0);
}

TEST_CASE("idx errors name the expected magic") {
    fs::path dir = temp_dir("idx_magic");
    std::vector<unsigned char> pixels(12, 0);
    std::vector<unsigned char> labels = {0, 1};

    write_idx_pair(dir / "im", dir / "lb", 2, 2, 3, pixels, labels, 0x9999, 0x801);
    try {
        load_idx((dir / "im").string(), (dir / "lb").string());
        FAIL("expected a format error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("0x00000803") != std::string::npos);
    }

    write_idx_pair(dir / "im", dir / "lb", 2, 2, 3, pixels, labels, 0x803, 0x777);
    try {
        load_idx((dir / "im").string(), (dir / "lb").string());
        FAIL("expected a format error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("0x00000801") != std::string::npos);
    }
}

TEST_CASE("idx loading fails closed on truncation and count mismatch") {
    fs::path dir = temp_dir("idx_bad");
    std::vector<unsigned char> pixels(12, 7);
    std::vector<unsigned char> labels = {0, 1};

    // Image payload one byte short.
    std::vector<unsigned char> short_pixels(11, 7);
    write_idx_pair(dir / "im", dir / "lb", 2, 2, 3, short_pixels, labels);
    CHECK_THROWS_AS(load_idx((dir / "im").string(), (dir / "lb").string()), std::runtime_error);

    // Label count disagrees with the image count.
    write_idx_pair(dir / "im", dir / "lb", 2, 2, 3, pixels, labels);
    {
        std::ofstream lb(dir / "lb", std::ios::binary);
        put_u32_be(lb, 0x801);
        put_u32_be(lb, 3);
        lb.write("\0\1\2", 3);
    }
    CHECK_THROWS_AS(load_idx((dir / "im").string(), (dir / "lb").string()), std::runtime_error);

    CHECK_THROWS_AS(load_idx((dir / "missing").string(), (dir / "lb").string()),
                    std::runtime_error);
}

TEST_CASE("tensor batches round-trip through a directory") {
    fs::path dir = temp_dir("batch_ok");
    TensorBatch batch = sample_batch();
    save_tensor_batch(batch, dir.string());

    TensorBatch back = load_tensor_batch(dir.string());
    REQUIRE(back.items.size() == 3);
    CHECK(back.config["epsilon"] == 0.03);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(max_abs_diff(back.items[i].tensor, batch.items[i].tensor) == 0.0);
        CHECK(back.items[i].id == batch.items[i].id);
        CHECK(back.items[i].label == batch.items[i].label);
        CHECK(back.items[i].attack == "fgsm");
        CHECK(back.items[i].success == batch.items[i].success);
        CHECK(back.items[i].linf == doctest::Approx(batch.items[i].linf));
        CHECK(back.items[i].l2 == doctest::Approx(batch.items[i].l2));
    }
}

TEST_CASE("a corrupted payload fails the load and names the file") {
    fs::path dir = temp_dir("batch_corrupt");
    save_tensor_batch(sample_batch(), dir.string());

    {
        std::fstream f(dir / "000001.f64", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(5);
        char byte = 0;
        f.read(&byte, 1);
        f.seekp(5);
        byte = static_cast<char>(byte ^ 0x40);
        f.write(&byte, 1);
    }
    try {
        load_tensor_batch(dir.string());
        FAIL("expected a checksum error");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("000001.f64") != std::string::npos);
    }
}

TEST_CASE("missing and unexpected payload files fail the load") {
    fs::path dir = temp_dir("batch_files");
    save_tensor_batch(sample_batch(), dir.string());

    fs::path extra = dir / "000009.f64";
    {
        std::ofstream out(extra, std::ios::binary);
        out << "junk";
    }
    CHECK_THROWS_AS(load_tensor_batch(dir.string()), std::runtime_error);
    fs::remove(extra);

    fs::remove(dir / "000002.f64");
    CHECK_THROWS_AS(load_tensor_batch(dir.string()), std::runtime_error);
}

TEST_CASE("netpbm writers emit valid headers and scaled bytes") {
    fs::path dir = temp_dir("pbm");
    Tensor gray({2, 3, 1});
    gray.data = {0.0, 0.5, 1.0, 0.25, 1.5, -0.5};  // clamped on write
    write_pgm(gray, (dir / "g.pgm").string());

    std::ifstream in(dir / "g.pgm", std::ios::binary);
    std::string magic;
    std::size_t w, h, maxv;
    in >> magic >> w >> h >> maxv;
    CHECK(magic == "P5");
    CHECK(w == 3);
    CHECK(h == 2);
    CHECK(maxv == 255);
    in.get();
    unsigned char bytes[6];
    in.read(reinterpret_cast<char*>(bytes), 6);
    CHECK(bytes[0] == 0);
    CHECK(bytes[1] == 128);
    CHECK(bytes[2] == 255);
    CHECK(bytes[4] == 255);  // clamped high
    CHECK(bytes[5] == 0);    // clamped low

    Tensor rgb({1, 2, 3});
    rgb.data = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
    write_ppm(rgb, (dir / "c.ppm").string());
    std::ifstream cin_(dir / "c.ppm", std::ios::binary);
    cin_ >> magic >> w >> h >> maxv;
    CHECK(magic == "P6");
    CHECK(w == 2);
    CHECK(h == 1);
}

TEST_CASE("fnv1a64 matches the reference vectors") {
    CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("shape swaps and texture lies recombine the two class layers exactly") {
    // Freeze every stochastic knob except the textured draw so the three
    // variants share their random streams image for image.
    SynthOptions base;
    base.height = 12;
    base.width = 12;
    base.noise_sigma = 0.0;
    base.max_shift = 0;
    base.scale_lo = base.scale_hi = 1.0;
    base.amplitude_lo = base.amplitude_hi = 0.6;
    base.texture_amplitude = 0.05;
    base.texture_probability = 1.0;

    SynthOptions plain_opts = base;
    plain_opts.texture_probability = 0.0;
    SynthOptions swapped_opts = base;
    swapped_opts.shape_swap_probability = 1.0;
    SynthOptions lying_opts = base;
    lying_opts.texture_lie_probability = 1.0;

    LabeledDataset natural = synth_dataset(7, 4, 2, base);
    LabeledDataset plain = synth_dataset(7, 4, 2, plain_opts);
    LabeledDataset swapped = synth_dataset(7, 4, 2, swapped_opts);
    LabeledDataset lying = synth_dataset(7, 4, 2, lying_opts);

    CHECK(swapped.labels == natural.labels);
    CHECK(swapped.ids == natural.ids);

    // With two classes the only possible swap partner is the other class:
    // swapped = other class's shape + own texture; lying = own shape + other
    // class's texture. texture(cls) = natural(cls) - plain(cls).
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t other = i % 2 == 0 ? i + 1 : i - 1;  // same draw index parity
        for (std::size_t j = 0; j < natural.images[i].numel(); ++j) {
            const double tex_own = natural.images[i].data[j] - plain.images[i].data[j];
            const double tex_other =
                natural.images[other].data[j] - plain.images[other].data[j];
            CHECK(swapped.images[i].data[j] ==
                  doctest::Approx(plain.images[other].data[j] + tex_own).epsilon(1e-12));
            CHECK(lying.images[i].data[j] ==
                  doctest::Approx(plain.images[i].data[j] + tex_other).epsilon(1e-12));
        }
    }
}

TEST_CASE("texture scrambling keeps the shape and swaps the pattern for noise") {
    SynthOptions base;
    base.height = 12;
    base.width = 12;
    base.noise_sigma = 0.0;
    base.max_shift = 0;
    base.scale_lo = base.scale_hi = 1.0;
    base.amplitude_lo = base.amplitude_hi = 0.6;
    base.texture_amplitude = 0.05;
    base.texture_probability = 1.0;

    SynthOptions plain_opts = base;
    plain_opts.texture_probability = 0.0;
    SynthOptions scrambled_opts = base;
    scrambled_opts.texture_scramble_probability = 1.0;
    // Scrambling wins over swap and lie, so these must have no effect.
    scrambled_opts.shape_swap_probability = 1.0;
    scrambled_opts.texture_lie_probability = 1.0;

    LabeledDataset plain = synth_dataset(7, 6, 2, plain_opts);
    LabeledDataset scrambled = synth_dataset(7, 6, 2, scrambled_opts);

    CHECK(scrambled.labels == plain.labels);
    for (std::size_t i = 0; i < 6; ++i) {
        // Shape survives untouched: the difference is exactly +-amplitude
        // everywhere, never a swapped-in other shape.
        for (std::size_t j = 0; j < plain.images[i].numel(); ++j) {
            const double diff = scrambled.images[i].data[j] - plain.images[i].data[j];
            CHECK(std::abs(std::abs(diff) - base.texture_amplitude) < 1e-12);
        }
    }
    // Patterns are per image, not a shared class texture.
    std::size_t same = 0;
    for (std::size_t j = 0; j < plain.images[0].numel(); ++j) {
        const double a = scrambled.images[0].data[j] - plain.images[0].data[j];
        const double b = scrambled.images[2].data[j] - plain.images[2].data[j];
        if ((a > 0) == (b > 0)) ++same;
    }
    CHECK(same < plain.images[0].numel());
}
