#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "tmvit/errors.hpp"
#include "tmvit/image_io.hpp"
#include "tmvit/model.hpp"
#include "tmvit/viz.hpp"
#include "tmvit/weights_io.hpp"

using namespace tmvit;
namespace fs = std::filesystem;

namespace {

ModelConfig small_dual() {
    ModelConfig cfg;
    cfg.name = "toy-dual";
    cfg.depth = 4;
    cfg.dim = 16;
    cfg.heads = 4;
    cfg.mlp_ratio = 2.0f;
    cfg.prune_layers = {3};
    cfg.keep_rate = 0.5f;
    cfg.n_downsampled_blocks = 2;
    cfg.num_classes = 7;
    cfg.image_size = 32;
    cfg.patch_high = 8;
    cfg.patch_low = 16;
    cfg.multiscale = true;
    return cfg;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("tmvit_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    REQUIRE(out.good());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Raw container: magic, little-endian u64 header length, header text, payload.
std::string make_container(const std::string& header, const std::string& payload) {
    std::string bytes = "TMWT0001";
    std::uint64_t len = header.size();
    for (int i = 0; i < 8; ++i)
        bytes.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
    bytes += header;
    bytes += payload;
    return bytes;
}

std::string float_bytes(const std::vector<float>& v) {
    std::string bytes(v.size() * 4, '\0');
    std::memcpy(bytes.data(), v.data(), bytes.size());
    return bytes;
}

WeightFileError::Kind load_kind(const std::string& path) {
    try {
        load_tensor_map(path);
    } catch (const WeightFileError& e) {
        return e.kind;
    }
    FAIL("expected WeightFileError");
    return WeightFileError::Kind::BadMagic;
}

RgbImage solid_image(int w, int h, unsigned char r, unsigned char g, unsigned char b) {
    RgbImage img;
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    return img;
}

} // namespace

TEST_CASE("weight container round trip is bitwise") {
    TempDir dir;
    ModelConfig cfg = small_dual();
    ModelParams saved = random_init(cfg, 7);
    const std::string path = dir.file("weights.bin");
    save_weights(saved, path);

    SUBCASE("via load_weights") {
        ModelParams loaded = load_weights(path, cfg);
        auto a = named_tensors(saved);
        auto b = named_tensors(loaded);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].first == b[i].first);
            REQUIRE(a[i].second->shape() == b[i].second->shape());
            for (std::size_t j = 0; j < a[i].second->size(); ++j)
                CHECK((*a[i].second)[j] == (*b[i].second)[j]);
        }
    }
    SUBCASE("via the raw tensor map") {
        auto map = load_tensor_map(path);
        auto names = named_tensors(saved);
        REQUIRE(map.size() == names.size());
        for (const auto& [name, tensor] : names) {
            REQUIRE(map.count(name));
            CHECK(map.at(name).shape() == tensor->shape());
        }
    }
    SUBCASE("saving twice produces identical bytes") {
        const std::string again = dir.file("weights2.bin");
        save_weights(saved, again);
        CHECK(read_file(path) == read_file(again));
    }
    SUBCASE("no temp files survive") {
        int entries = 0;
        for (const auto& entry : fs::directory_iterator(dir.path)) {
            (void)entry;
            ++entries;
        }
        CHECK(entries == 1);
    }
    SUBCASE("file starts with the magic") {
        std::string bytes = read_file(path);
        REQUIRE(bytes.size() >= 8);
        CHECK(bytes.substr(0, 8) == "TMWT0001");
    }
}

TEST_CASE("single-scale configs ignore extra dual-scale tensors") {
    TempDir dir;
    ModelConfig dual = small_dual();
    const std::string path = dir.file("dual.bin");
    save_weights(random_init(dual, 8), path);

    ModelConfig single = dual;
    single.multiscale = false;
    single.n_downsampled_blocks = 0;
    ModelParams loaded = load_weights(path, single);
    CHECK_NOTHROW(validate_params(loaded, single));
    CHECK(loaded.fusion.up_pw.empty());
}

TEST_CASE("weight container error taxonomy") {
    TempDir dir;

    SUBCASE("bad magic") {
        const std::string path = dir.file("bad_magic.bin");
        write_file(path, "NOTMAGIC" + std::string(64, '\0'));
        CHECK(load_kind(path) == WeightFileError::Kind::BadMagic);
    }
    SUBCASE("header running past the end of file") {
        const std::string path = dir.file("bad_hdrlen.bin");
        std::string bytes = "TMWT0001";
        std::uint64_t len = 1 << 20;
        for (int i = 0; i < 8; ++i)
            bytes.push_back(static_cast<char>((len >> (8 * i)) & 0xff));
        bytes += "tiny";
        write_file(path, bytes);
        CHECK(load_kind(path) == WeightFileError::Kind::Truncated);
    }
    SUBCASE("malformed header lines") {
        const std::string path = dir.file("bad_header.bin");
        write_file(path, make_container("a f32\n", ""));
        CHECK(load_kind(path) == WeightFileError::Kind::BadHeader);
        write_file(path, make_container("a f64 2x2 @0\n", float_bytes({1, 2, 3, 4})));
        CHECK(load_kind(path) == WeightFileError::Kind::BadHeader);
        write_file(path, make_container("a f32 2xtwo @0\n", float_bytes({1, 2, 3, 4})));
        CHECK(load_kind(path) == WeightFileError::Kind::BadHeader);
        write_file(path, make_container("a f32 0x2 @0\n", ""));
        CHECK(load_kind(path) == WeightFileError::Kind::BadHeader);
    }
    SUBCASE("duplicated tensor name") {
        const std::string path = dir.file("dup.bin");
        write_file(path, make_container("a f32 2 @0\na f32 2 @8\n",
                                        float_bytes({1, 2, 3, 4})));
        CHECK(load_kind(path) == WeightFileError::Kind::DuplicateTensor);
    }
    SUBCASE("offsets must tile the payload exactly") {
        const std::string path = dir.file("layout.bin");
        // gap between tensors
        write_file(path, make_container("a f32 2 @0\nb f32 2 @12\n",
                                        float_bytes({1, 2, 0, 3, 4})));
        CHECK(load_kind(path) == WeightFileError::Kind::BadLayout);
        // descending offsets
        write_file(path, make_container("a f32 2 @8\nb f32 2 @0\n",
                                        float_bytes({1, 2, 3, 4})));
        CHECK(load_kind(path) == WeightFileError::Kind::BadLayout);
        // trailing unclaimed bytes
        write_file(path, make_container("a f32 2 @0\n", float_bytes({1, 2, 3})));
        CHECK(load_kind(path) == WeightFileError::Kind::BadLayout);
    }
    SUBCASE("payload shorter than promised") {
        const std::string path = dir.file("trunc.bin");
        write_file(path, make_container("a f32 4 @0\n", float_bytes({1, 2})));
        CHECK(load_kind(path) == WeightFileError::Kind::Truncated);
    }
    SUBCASE("valid hand-built container parses") {
        const std::string path = dir.file("ok.bin");
        write_file(path, make_container("a f32 2x2 @0\nb f32 3 @16\n",
                                        float_bytes({1, 2, 3, 4, 5, 6, 7})));
        auto map = load_tensor_map(path);
        REQUIRE(map.size() == 2);
        CHECK(map.at("a").shape() == std::vector<int>{2, 2});
        CHECK(map.at("a")(1, 0) == 3.0f);
        CHECK(map.at("b").shape() == std::vector<int>{3});
        CHECK(map.at("b")[2] == 7.0f);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_tensor_map(dir.file("nope.bin")), IoError);
    }
}

TEST_CASE("load_weights validates against the config") {
    TempDir dir;
    ModelConfig cfg = small_dual();
    cfg.multiscale = false;
    cfg.n_downsampled_blocks = 0;

    SUBCASE("missing tensor") {
        ModelParams p = random_init(cfg, 9);
        p.head_b = Tensor{};   // dropped from the container
        const std::string path = dir.file("missing.bin");
        save_weights(p, path);
        try {
            load_weights(path, cfg);
            FAIL("expected WeightFileError");
        } catch (const WeightFileError& e) {
            CHECK(e.kind == WeightFileError::Kind::MissingTensor);
            CHECK(std::string(e.what()).find("head.b") != std::string::npos);
        }
    }
    SUBCASE("shape mismatch") {
        ModelParams p = random_init(cfg, 9);
        p.head_w = Tensor({3, 3});
        const std::string path = dir.file("misshapen.bin");
        save_weights(p, path);
        try {
            load_weights(path, cfg);
            FAIL("expected WeightFileError");
        } catch (const WeightFileError& e) {
            CHECK(e.kind == WeightFileError::Kind::ShapeMismatch);
            CHECK(std::string(e.what()).find("head.w") != std::string::npos);
        }
    }
}

TEST_CASE("ppm io") {
    TempDir dir;

    SUBCASE("round trip is bitwise") {
        RgbImage img;
        img.width = 3;
        img.height = 2;
        img.pixels.resize(18);
        for (std::size_t i = 0; i < img.pixels.size(); ++i)
            img.pixels[i] = static_cast<unsigned char>(i * 13 + 5);
        const std::string path = dir.file("img.ppm");
        write_ppm(img, path);
        RgbImage back = read_ppm(path);
        CHECK(back.width == 3);
        CHECK(back.height == 2);
        CHECK(back.pixels == img.pixels);
    }
    SUBCASE("white pixel normalizes to exactly 1") {
        const std::string path = dir.file("white.ppm");
        write_ppm(solid_image(1, 1, 255, 255, 255), path);
        Tensor t = load_image_ppm(path, 1);
        REQUIRE(t.shape() == std::vector<int>{3, 1, 1});
        for (std::size_t i = 0; i < t.size(); ++i)
            CHECK(t[i] == doctest::Approx(1.0f).epsilon(1e-6));
    }
    SUBCASE("black pixel normalizes to -1") {
        const std::string path = dir.file("black.ppm");
        write_ppm(solid_image(1, 1, 0, 0, 0), path);
        Tensor t = load_image_ppm(path, 1);
        for (std::size_t i = 0; i < t.size(); ++i)
            CHECK(t[i] == doctest::Approx(-1.0f).epsilon(1e-6));
    }
    SUBCASE("custom normalization") {
        const std::string path = dir.file("gray.ppm");
        write_ppm(solid_image(1, 1, 51, 51, 51), path);
        Tensor t = load_image_ppm(path, 1, ImageNorm{0.2f, 0.4f});
        // 51/255 = 0.2, so (0.2 - 0.2) / 0.4 = 0
        for (std::size_t i = 0; i < t.size(); ++i)
            CHECK(t[i] == doctest::Approx(0.0f).epsilon(1e-5));
    }
    SUBCASE("ascii ppm is rejected with a pointer to P6") {
        const std::string path = dir.file("p3.ppm");
        write_file(path, "P3\n1 1\n255\n255 0 0\n");
        try {
            read_ppm(path);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(std::string(e.what()).find("P6") != std::string::npos);
        }
    }
    SUBCASE("only maxval 255 is supported") {
        const std::string path = dir.file("deep.ppm");
        write_file(path, std::string("P6\n1 1\n65535\n") + "abcdef");
        CHECK_THROWS_AS(read_ppm(path), ParseError);
    }
    SUBCASE("truncated raster") {
        const std::string path = dir.file("short.ppm");
        write_file(path, std::string("P6\n2 2\n255\n") + "abc");
        CHECK_THROWS_AS(read_ppm(path), ParseError);
    }
    SUBCASE("header comments are skipped") {
        const std::string path = dir.file("comments.ppm");
        std::string raster = {char(10), char(20), char(30)};
        write_file(path, "P6\n# made by hand\n1 # width then height\n1\n255\n" + raster);
        RgbImage img = read_ppm(path);
        CHECK(img.width == 1);
        CHECK(img.height == 1);
        CHECK(img.at(0, 0, 0) == 10);
        CHECK(img.at(0, 0, 2) == 30);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_ppm(dir.file("nope.ppm")), IoError);
    }
}

TEST_CASE("nearest resize") {
    RgbImage img;
    img.width = 2;
    img.height = 2;
    img.pixels = {10, 10, 10, 20, 20, 20,
                  30, 30, 30, 40, 40, 40};

    SUBCASE("same size is a copy") {
        RgbImage out = nearest_resize(img, 2, 2);
        CHECK(out.pixels == img.pixels);
    }
    SUBCASE("doubling replicates 2x2 blocks") {
        RgbImage out = nearest_resize(img, 4, 4);
        REQUIRE(out.width == 4);
        REQUIRE(out.height == 4);
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                unsigned char want = img.at(y / 2, x / 2, 0);
                CHECK(out.at(y, x, 0) == want);
            }
    }
    SUBCASE("via load_image_ppm") {
        TempDir dir;
        const std::string path = dir.file("quad.ppm");
        write_ppm(img, path);
        Tensor t = load_image_ppm(path, 4);
        REQUIRE(t.shape() == std::vector<int>{3, 4, 4});
        // top-left quadrant comes from pixel value 10: (10/255 - .5)/.5
        float want = (10.0f / 255.0f - 0.5f) / 0.5f;
        CHECK(t(0, 0, 0) == doctest::Approx(want).epsilon(1e-6));
        CHECK(t(0, 1, 1) == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("merge frames from synthetic traces") {
    ForwardTrace trace;
    trace.patch_grid = 2;

    PruneEvent first;
    first.layer = 3;
    first.outcome.group_provenance = {{}, {0, 1}, {2}, {3}};
    PruneEvent second;
    second.layer = 5;
    second.outcome.group_provenance = {{}, {0, 1, 3}, {2}};
    trace.prune_events = {first, second};

    auto frames = merge_frames(trace);
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].layer == 3);
    CHECK(frames[0].cell_group == std::vector<int>{0, 0, 2, 3});
    CHECK(frames[1].layer == 5);
    CHECK(frames[1].cell_group == std::vector<int>{0, 0, 2, 0});

    SUBCASE("group ids are stable while groups only grow") {
        std::set<int> late(frames[1].cell_group.begin(), frames[1].cell_group.end());
        for (int g : late) {
            bool present = std::find(frames[0].cell_group.begin(), frames[0].cell_group.end(),
                                     g) != frames[0].cell_group.end();
            CHECK(present);
        }
    }
    SUBCASE("gaps in coverage are rejected") {
        trace.prune_events[1].outcome.group_provenance = {{}, {0, 1}, {2}};
        CHECK_THROWS_AS(merge_frames(trace), ParameterError);
    }
    SUBCASE("out-of-range patch ids are rejected") {
        trace.prune_events[1].outcome.group_provenance = {{}, {0, 1, 3, 4}, {2}};
        CHECK_THROWS_AS(merge_frames(trace), ParameterError);
    }
    SUBCASE("no events is an error") {
        ForwardTrace empty;
        empty.patch_grid = 2;
        CHECK_THROWS_AS(merge_frames(empty), ParameterError);
    }
}

TEST_CASE("group palette") {
    auto colors = group_palette(196, 123);
    REQUIRE(colors.size() == 196);
    std::set<std::vector<int>> uniq;
    for (const auto& c : colors) uniq.insert({c[0], c[1], c[2]});
    CHECK(uniq.size() == 196);

    auto again = group_palette(196, 123);
    CHECK(colors == again);
    auto other = group_palette(196, 124);
    CHECK(colors != other);

    CHECK(group_palette(1, 0).size() == 1);
    CHECK_THROWS_AS(group_palette(0, 0), ParameterError);
}

TEST_CASE("rendering writes one image per prune event") {
    TempDir dir;
    ForwardTrace trace;
    trace.patch_grid = 2;
    PruneEvent first;
    first.layer = 3;
    first.outcome.group_provenance = {{}, {0, 1}, {2}, {3}};
    PruneEvent second;
    second.layer = 10;
    second.outcome.group_provenance = {{}, {0, 1, 2, 3}};
    trace.prune_events = {first, second};

    auto paths = render_merge_trace(trace, dir.file("viz"), 4, 9);
    REQUIRE(paths.size() == 2);
    CHECK(fs::path(paths[0]).filename().string() == "merge_layer_03.ppm");
    CHECK(fs::path(paths[1]).filename().string() == "merge_layer_10.ppm");

    RgbImage img = read_ppm(paths[0]);
    REQUIRE(img.width == 8);
    REQUIRE(img.height == 8);
    // patches 0 and 1 share one group color, patches 2 and 3 differ
    auto pixel = [&](int y, int x) {
        return std::array<unsigned char, 3>{img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)};
    };
    CHECK(pixel(0, 0) == pixel(0, 7));    // cells (0,0) and (0,1) merged
    CHECK(pixel(0, 0) == pixel(3, 3));    // solid within a cell
    CHECK(pixel(4, 0) != pixel(0, 0));    // cell (1,0) kept its own group
    CHECK(pixel(4, 0) != pixel(4, 7));    // cells (1,0) and (1,1) distinct

    RgbImage last = read_ppm(paths[1]);
    auto lp = [&](int y, int x) {
        return std::array<unsigned char, 3>{last.at(y, x, 0), last.at(y, x, 1),
                                            last.at(y, x, 2)};
    };
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) CHECK(lp(y, x) == lp(0, 0));
}

TEST_CASE("rendering a real forward trace") {
    TempDir dir;
    ModelConfig cfg = small_dual();
    ModelParams params = random_init(cfg, 71);
    Tensor image({3, 32, 32});
    std::mt19937_64 rng(72);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    for (std::size_t i = 0; i < image.size(); ++i) image[i] = dist(rng);

    ForwardTrace trace = forward(image, params, cfg);
    auto paths = render_merge_trace(trace, dir.file("real"), 3);
    REQUIRE(paths.size() == 1);
    RgbImage img = read_ppm(paths[0]);
    CHECK(img.width == trace.patch_grid * 3);

    auto frames = merge_frames(trace);
    std::set<int> groups(frames[0].cell_group.begin(), frames[0].cell_group.end());
    // kept tokens after the prune: 9 including CLS, so 8 patch groups
    CHECK(groups.size() == 8);
}
