#include "tmvit/image_io.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include "tmvit/errors.hpp"

namespace tmvit {

namespace {

// Reads the next whitespace-separated PPM header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

int parse_positive(const std::string& tok, const char* what, const std::string& path) {
    try {
        std::size_t used = 0;
        int v = std::stoi(tok, &used);
        if (used != tok.size() || v <= 0) throw std::invalid_argument("range");
        return v;
    } catch (const std::exception&) {
        throw ParseError(path + ": bad PPM " + std::string(what) + " '" + tok + "'");
    }
}

} // namespace

RgbImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);

    std::string magic = next_token(in);
    if (magic == "P3")
        throw ParseError(path + ": ASCII PPM (P3) is not supported, use binary P6");
    if (magic != "P6") throw ParseError(path + ": not a P6 PPM file");

    RgbImage img;
    img.width = parse_positive(next_token(in), "width", path);
    img.height = parse_positive(next_token(in), "height", path);
    int maxval = parse_positive(next_token(in), "maxval", path);
    if (maxval != 255) throw ParseError(path + ": PPM maxval must be 255, got " +
                                        std::to_string(maxval));
    // The single whitespace byte after the maxval token was consumed as its
    // terminator; the raster starts right here.

    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    in.read(reinterpret_cast<char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != img.pixels.size())
        throw ParseError(path + ": raster truncated");
    return img;
}

void write_ppm(const RgbImage& img, const std::string& path) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw DimensionError("image buffer does not match its dimensions");

    namespace fs = std::filesystem;
    fs::path tmp(path);
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out << "P6\n" << img.width << " " << img.height << "\n255\n";
        out.write(reinterpret_cast<const char*>(img.pixels.data()),
                  static_cast<std::streamsize>(img.pixels.size()));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, fs::path(path), ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
    }
}

RgbImage nearest_resize(const RgbImage& img, int width, int height) {
    if (width <= 0 || height <= 0) throw DimensionError("resize target must be positive");
    RgbImage out;
    out.width = width;
    out.height = height;
    out.pixels.resize(static_cast<std::size_t>(width) * height * 3);
    for (int y = 0; y < height; ++y) {
        int sy = static_cast<int>(static_cast<long long>(y) * img.height / height);
        for (int x = 0; x < width; ++x) {
            int sx = static_cast<int>(static_cast<long long>(x) * img.width / width);
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    }
    return out;
}

Tensor load_image_ppm(const std::string& path, int side, ImageNorm norm) {
    if (side <= 0) throw DimensionError("image side must be positive");
    if (norm.std == 0.0f) throw ParameterError("normalization std must be nonzero");
    RgbImage img = read_ppm(path);
    if (img.width != side || img.height != side) img = nearest_resize(img, side, side);

    Tensor t({3, side, side});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                t(c, y, x) = (img.at(y, x, c) / 255.0f - norm.mean) / norm.std;
    return t;
}

} // namespace tmvit
