#include "uierl/image_io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <zlib.h>

#include <json.hpp>

namespace uierl::io {

namespace {

using json = nlohmann::json;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    return buf;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& buf) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write '" + path.string() + "'");
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!f) throw DataError("short write to '" + path.string() + "'");
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    const auto crc =
        crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> zlib_deflate(const std::vector<std::uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw DataError("png: deflate failed");
    out.resize(bound);
    return out;
}

std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& comp, size_t expected) {
    std::vector<std::uint8_t> out(expected);
    uLongf len = static_cast<uLongf>(expected);
    const int rc = uncompress(out.data(), &len, comp.data(), static_cast<uLong>(comp.size()));
    if (rc != Z_OK || len != expected) throw DataError("png: inflate failed or size mismatch");
    return out;
}

const std::uint8_t kPngSig[8] = {0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a};

void write_png(const std::filesystem::path& path, const std::uint8_t* pixels, int h, int w,
               int channels) {
    std::vector<std::uint8_t> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(w));
    put_u32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);                                      // bit depth
    ihdr.push_back(channels == 3 ? 2 : 0);                  // color type
    ihdr.push_back(0);                                      // compression
    ihdr.push_back(0);                                      // filter
    ihdr.push_back(0);                                      // interlace

    const size_t row = static_cast<size_t>(w) * channels;
    std::vector<std::uint8_t> raw;
    raw.reserve((row + 1) * static_cast<size_t>(h));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0); // filter type none
        raw.insert(raw.end(), pixels + static_cast<size_t>(y) * row,
                   pixels + static_cast<size_t>(y + 1) * row);
    }

    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", zlib_deflate(raw));
    put_chunk(out, "IEND", {});
    write_file(path, out);
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

struct PngImage {
    int h = 0, w = 0, channels = 0;
    std::vector<std::uint8_t> pixels; // interleaved rows
};

PngImage read_png(const std::filesystem::path& path) {
    const auto buf = read_file(path);
    if (buf.size() < 8 || std::memcmp(buf.data(), kPngSig, 8) != 0)
        throw DataError("'" + path.string() + "' is not a PNG file");
    size_t pos = 8;
    int w = 0, h = 0, depth = 0, color = 0, interlace = 0;
    std::vector<std::uint8_t> idat;
    while (pos + 8 <= buf.size()) {
        const std::uint32_t len = get_u32(buf.data() + pos);
        if (pos + 12 + len > buf.size()) throw DataError("png: truncated chunk in '" + path.string() + "'");
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const std::uint8_t* data = buf.data() + pos + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError("png: bad IHDR in '" + path.string() + "'");
            w = static_cast<int>(get_u32(data));
            h = static_cast<int>(get_u32(data + 4));
            depth = data[8];
            color = data[9];
            interlace = data[12];
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0) throw DataError("png: missing IHDR in '" + path.string() + "'");
    if (depth != 8) throw DataError("png: only 8-bit images supported, '" + path.string() + "'");
    if (interlace != 0) throw DataError("png: interlaced images not supported, '" + path.string() + "'");
    int channels;
    switch (color) {
    case 0: channels = 1; break;
    case 2: channels = 3; break;
    case 6: channels = 4; break;
    default: throw DataError("png: unsupported color type " + std::to_string(color));
    }

    const size_t row = static_cast<size_t>(w) * channels;
    auto raw = zlib_inflate(idat, (row + 1) * static_cast<size_t>(h));

    PngImage img;
    img.h = h;
    img.w = w;
    img.channels = channels;
    img.pixels.assign(row * static_cast<size_t>(h), 0);
    std::vector<std::uint8_t> prev(row, 0);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t filter = raw[static_cast<size_t>(y) * (row + 1)];
        const std::uint8_t* src = raw.data() + static_cast<size_t>(y) * (row + 1) + 1;
        std::uint8_t* dst = img.pixels.data() + static_cast<size_t>(y) * row;
        for (size_t x = 0; x < row; ++x) {
            const int a = x >= static_cast<size_t>(channels) ? dst[x - channels] : 0;
            const int b = prev[x];
            const int c = x >= static_cast<size_t>(channels) ? prev[x - channels] : 0;
            int v = src[x];
            switch (filter) {
            case 0: break;
            case 1: v += a; break;
            case 2: v += b; break;
            case 3: v += (a + b) / 2; break;
            case 4: v += paeth(a, b, c); break;
            default: throw DataError("png: bad filter type " + std::to_string(filter));
            }
            dst[x] = static_cast<std::uint8_t>(v & 0xff);
        }
        std::memcpy(prev.data(), dst, row);
    }
    return img;
}

std::uint8_t to_byte(double v) {
    const double q = std::lround(std::min(1.0, std::max(0.0, v)) * 255.0);
    return static_cast<std::uint8_t>(q);
}

json water_to_json(const imaging::WaterParams& w) {
    return json{{"beta", {w.beta[0], w.beta[1], w.beta[2]}},
                {"ambient", {w.ambient[0], w.ambient[1], w.ambient[2]}}};
}

imaging::WaterParams water_from_json(const json& j) {
    imaging::WaterParams w;
    for (int c = 0; c < 3; ++c) {
        w.beta[static_cast<size_t>(c)] = j.at("beta").at(c).get<double>();
        w.ambient[static_cast<size_t>(c)] = j.at("ambient").at(c).get<double>();
    }
    return w;
}

} // namespace

void write_png_rgb8(const std::filesystem::path& path, const Raster& img01) {
    if (!img01.defined() || img01.ndim() != 3 || img01.dim(0) != 3)
        throw UsageError("write_png_rgb8: expected 3xHxW image");
    const int h = img01.dim(1), w = img01.dim(2);
    const std::int64_t m = static_cast<std::int64_t>(h) * w;
    std::vector<std::uint8_t> pixels(static_cast<size_t>(m) * 3);
    for (std::int64_t i = 0; i < m; ++i)
        for (int c = 0; c < 3; ++c)
            pixels[static_cast<size_t>(i) * 3 + c] = to_byte(img01.data()[c * m + i]);
    write_png(path, pixels.data(), h, w, 3);
}

void write_png_gray8(const std::filesystem::path& path, const std::vector<std::uint8_t>& pixels,
                     int h, int w) {
    if (static_cast<size_t>(h) * w != pixels.size())
        throw UsageError("write_png_gray8: pixel count does not match size");
    write_png(path, pixels.data(), h, w, 1);
}

Raster read_png_rgb(const std::filesystem::path& path) {
    const auto img = read_png(path);
    const std::int64_t m = static_cast<std::int64_t>(img.h) * img.w;
    std::vector<double> out(static_cast<size_t>(3 * m));
    for (std::int64_t i = 0; i < m; ++i) {
        double r, g, b;
        if (img.channels == 1) {
            r = g = b = img.pixels[static_cast<size_t>(i)] / 255.0;
        } else {
            r = img.pixels[static_cast<size_t>(i) * img.channels + 0] / 255.0;
            g = img.pixels[static_cast<size_t>(i) * img.channels + 1] / 255.0;
            b = img.pixels[static_cast<size_t>(i) * img.channels + 2] / 255.0;
        }
        out[static_cast<size_t>(i)] = r;
        out[static_cast<size_t>(m + i)] = g;
        out[static_cast<size_t>(2 * m + i)] = b;
    }
    return Raster::from({3, img.h, img.w}, std::move(out));
}

void write_pgm16(const std::filesystem::path& path, const Raster& depth01) {
    if (!depth01.defined() || depth01.ndim() != 3 || depth01.dim(0) != 1)
        throw UsageError("write_pgm16: expected 1xHxW depth map");
    const int h = depth01.dim(1), w = depth01.dim(2);
    std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n65535\n";
    std::vector<std::uint8_t> buf(header.begin(), header.end());
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
        const double v = std::min(1.0, std::max(0.0, depth01.data()[i]));
        const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        buf.push_back(static_cast<std::uint8_t>(q >> 8));
        buf.push_back(static_cast<std::uint8_t>(q & 0xff));
    }
    write_file(path, buf);
}

Raster read_pgm16(const std::filesystem::path& path) {
    const auto buf = read_file(path);
    size_t pos = 0;
    auto next_token = [&]() -> std::string {
        while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
        if (pos < buf.size() && buf[pos] == '#') { // comment line
            while (pos < buf.size() && buf[pos] != '\n') ++pos;
            while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
        }
        std::string tok;
        while (pos < buf.size() && !std::isspace(buf[pos])) tok.push_back(static_cast<char>(buf[pos++]));
        return tok;
    };
    if (next_token() != "P5") throw DataError("'" + path.string() + "' is not a binary PGM");
    const int w = std::stoi(next_token());
    const int h = std::stoi(next_token());
    const int maxv = std::stoi(next_token());
    ++pos; // the single whitespace after maxval
    if (maxv != 65535) throw DataError("pgm: expected 16-bit maxval 65535 in '" + path.string() + "'");
    if (buf.size() - pos < static_cast<size_t>(h) * w * 2)
        throw DataError("pgm: truncated data in '" + path.string() + "'");
    std::vector<double> out(static_cast<size_t>(h) * w);
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(h) * w; ++i) {
        const std::uint16_t v = static_cast<std::uint16_t>(
            (buf[pos + static_cast<size_t>(i) * 2] << 8) | buf[pos + static_cast<size_t>(i) * 2 + 1]);
        out[static_cast<size_t>(i)] = v / 65535.0;
    }
    return Raster::from({1, h, w}, std::move(out));
}

void save_scene(const std::filesystem::path& dir, const SceneBatch& batch) {
    std::filesystem::create_directories(dir);
    json views = json::array();
    for (size_t i = 0; i < batch.views.size(); ++i) {
        const auto& v = batch.views[i];
        write_png_rgb8(dir / ("view_" + std::to_string(i) + ".png"), v.degraded);
        if (v.reference) write_png_rgb8(dir / ("ref_" + std::to_string(i) + ".png"), *v.reference);
        if (v.depth) write_pgm16(dir / ("depth_" + std::to_string(i) + ".pgm"), *v.depth);
        json jv;
        if (v.water) jv["water"] = water_to_json(*v.water);
        views.push_back(jv);
    }
    json j{{"scene_id", batch.scene_id},
           {"n_views", batch.views.size()},
           {"seed", batch.seed},
           {"base_water", water_to_json(batch.base_water)},
           {"jitter",
            {{"beta_frac", batch.jitter.beta_frac},
             {"ambient_abs", batch.jitter.ambient_abs},
             {"max_crop", batch.jitter.max_crop},
             {"hflip", batch.jitter.hflip}}},
           {"views", views}};
    std::ofstream f(dir / "scene.json", std::ios::trunc);
    if (!f) throw DataError("cannot write '" + (dir / "scene.json").string() + "'");
    f << j.dump(2) << "\n";
}

SceneBatch load_scene(const std::filesystem::path& dir) {
    SceneBatch batch;
    batch.scene_id = dir.filename().string();
    json meta;
    if (std::filesystem::exists(dir / "scene.json")) {
        std::ifstream f(dir / "scene.json");
        f >> meta;
        batch.scene_id = meta.value("scene_id", batch.scene_id);
        batch.seed = meta.value("seed", 0);
        if (meta.contains("base_water")) batch.base_water = water_from_json(meta["base_water"]);
        if (meta.contains("jitter")) {
            batch.jitter.beta_frac = meta["jitter"].value("beta_frac", 0.05);
            batch.jitter.ambient_abs = meta["jitter"].value("ambient_abs", 0.02);
            batch.jitter.max_crop = meta["jitter"].value("max_crop", 0.25);
            batch.jitter.hflip = meta["jitter"].value("hflip", true);
        }
    }
    for (int i = 0;; ++i) {
        const auto view_path = dir / ("view_" + std::to_string(i) + ".png");
        if (!std::filesystem::exists(view_path)) break;
        imaging::SceneView v;
        v.degraded = read_png_rgb(view_path);
        const auto ref_path = dir / ("ref_" + std::to_string(i) + ".png");
        if (std::filesystem::exists(ref_path)) v.reference = read_png_rgb(ref_path);
        const auto depth_path = dir / ("depth_" + std::to_string(i) + ".pgm");
        if (std::filesystem::exists(depth_path)) v.depth = read_pgm16(depth_path);
        if (meta.contains("views") && i < static_cast<int>(meta["views"].size()) &&
            meta["views"][static_cast<size_t>(i)].contains("water"))
            v.water = water_from_json(meta["views"][static_cast<size_t>(i)]["water"]);
        batch.views.push_back(std::move(v));
    }
    if (batch.views.empty())
        throw DataError("scene directory '" + dir.string() + "' contains no view_<i>.png files");
    batch.validate();
    return batch;
}

std::vector<SceneBatch> load_scenes(const std::filesystem::path& root) {
    if (!std::filesystem::is_directory(root))
        throw DataError("'" + root.string() + "' is not a directory");
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(root))
        if (e.is_directory()) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    std::vector<SceneBatch> out;
    for (const auto& d : dirs) out.push_back(load_scene(d));
    if (out.empty()) throw DataError("no scene directories under '" + root.string() + "'");
    return out;
}

} // namespace uierl::io
