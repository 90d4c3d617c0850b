// SPDX-License-Identifier: Apache-2.0
#pragma once

// Files: binary little-endian PLY splats (with an int label column), 8-bit
// RGB and 16-bit gray PNGs, and the camera / dataset JSON.

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "coregs/core.hpp"
#include "coregs/error.hpp"
#include "coregs/poi.hpp"

namespace coregs {

namespace fs = std::filesystem;

//------------------------------------------------------------------------------
// PLY

struct PlyInfo {
    std::size_t vertex_count = 0;
    int sh_degree = 0;
    bool has_label = false;
    bool has_normals = false;
    std::vector<std::string> warnings;
};

namespace detail {

enum class PlyType { kFloat, kInt, kUInt, kDouble, kUChar, kChar, kShort, kUShort };

inline std::optional<PlyType> ply_type(const std::string& s) {
    static const std::map<std::string, PlyType> t{
        {"float", PlyType::kFloat},   {"float32", PlyType::kFloat}, {"double", PlyType::kDouble},
        {"float64", PlyType::kDouble}, {"int", PlyType::kInt},       {"int32", PlyType::kInt},
        {"uint", PlyType::kUInt},     {"uint32", PlyType::kUInt},   {"uchar", PlyType::kUChar},
        {"uint8", PlyType::kUChar},   {"char", PlyType::kChar},     {"int8", PlyType::kChar},
        {"short", PlyType::kShort},   {"int16", PlyType::kShort},   {"ushort", PlyType::kUShort},
        {"uint16", PlyType::kUShort}};
    const auto it = t.find(s);
    return it == t.end() ? std::nullopt : std::optional<PlyType>(it->second);
}

inline std::size_t ply_size(PlyType t) {
    switch (t) {
        case PlyType::kDouble: return 8;
        case PlyType::kFloat:
        case PlyType::kInt:
        case PlyType::kUInt: return 4;
        case PlyType::kShort:
        case PlyType::kUShort: return 2;
        default: return 1;
    }
}

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

template <typename V>
V read_le(const char* p) {
    V v;
    std::memcpy(&v, p, sizeof v);
    return v;
}

template <typename V>
void write_le(std::ostream& os, V v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline std::vector<std::string> ply_property_names(int sh_degree) {
    std::vector<std::string> n{"x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"};
    const int rest = 3 * (sh_coeff_count(sh_degree) - 1);
    for (int i = 0; i < rest; ++i) n.push_back("f_rest_" + std::to_string(i));
    for (const char* s : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"}) n.push_back(s);
    return n;
}

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

/// Writes x, y, z, f_dc_*, f_rest_* (channel-major), opacity, scale_*, rot_*, label.
template <typename T>
void save_splats(const SplatScene<T>& scene, const fs::path& path) {
    scene.validate();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot write " + path.string());
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "element vertex " << scene.size() << "\n";
    for (const auto& n : detail::ply_property_names(scene.sh_degree)) os << "property float " << n << "\n";
    os << "property int label\nend_header\n";
    const std::size_t k = static_cast<std::size_t>(sh_coeff_count(scene.sh_degree));
    for (const auto& g : scene.gaussians) {
        const auto put = [&](T v) { detail::write_le(os, static_cast<float>(v)); };
        for (int i = 0; i < 3; ++i) put(g.position[i]);
        for (int c = 0; c < 3; ++c) put(g.sh[0][c]);
        for (int c = 0; c < 3; ++c)
            for (std::size_t j = 1; j < k; ++j) put(g.sh[j][c]);
        put(g.opacity_logit);
        for (int i = 0; i < 3; ++i) put(g.log_scale[i]);
        for (int i = 0; i < 4; ++i) put(g.rotation[i]);
        detail::write_le(os, static_cast<std::int32_t>(g.label));
    }
    if (!os) throw Error("write failed: " + path.string());
}

template <typename T>
SplatScene<T> parse_splats(const std::string& bytes, PlyInfo* info = nullptr, const std::string& name = "<buffer>") {
    const auto fail = [&](const std::string& what) -> FormatError { return FormatError(name + ": " + what); };
    std::size_t pos = 0;
    int line_no = 0;
    const auto next_line = [&]() -> std::string {
        const std::size_t e = bytes.find('\n', pos);
        if (e == std::string::npos) throw fail("header ends without end_header (line " + std::to_string(line_no + 1) + ")");
        std::string l = bytes.substr(pos, e - pos);
        if (!l.empty() && l.back() == '\r') l.pop_back();
        pos = e + 1;
        ++line_no;
        return l;
    };
    if (next_line() != "ply") throw fail("line 1: missing 'ply' magic");

    struct Prop {
        std::string name;
        detail::PlyType type;
        std::size_t offset;
        int line;
    };
    std::vector<Prop> props;
    std::size_t stride = 0, count = 0;
    bool format_seen = false, in_vertex = false, vertex_seen = false;
    for (;;) {
        const std::string l = next_line();
        std::istringstream ls(l);
        std::string kw;
        ls >> kw;
        const std::string at = "line " + std::to_string(line_no) + ": ";
        if (kw == "end_header") break;
        if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
        if (kw == "format") {
            std::string f, v;
            ls >> f >> v;
            if (f != "binary_little_endian") throw fail(at + "unsupported format '" + f + "' (binary_little_endian only)");
            if (v != "1.0") throw fail(at + "unsupported format version '" + v + "'");
            format_seen = true;
        } else if (kw == "element") {
            std::string e;
            long long n = -1;
            ls >> e >> n;
            if (e != "vertex") throw fail(at + "unknown element '" + e + "'");
            if (vertex_seen) throw fail(at + "duplicate vertex element");
            if (n < 0 || ls.fail()) throw fail(at + "bad vertex count");
            count = static_cast<std::size_t>(n);
            in_vertex = vertex_seen = true;
        } else if (kw == "property") {
            if (!in_vertex) throw fail(at + "property outside an element");
            std::string t, n;
            ls >> t >> n;
            if (t == "list") throw fail(at + "list properties are not supported");
            const auto type = detail::ply_type(t);
            if (!type) throw fail(at + "unknown property type '" + t + "'");
            for (const auto& p : props)
                if (p.name == n) throw fail(at + "duplicate property '" + n + "'");
            props.push_back({n, *type, stride, line_no});
            stride += detail::ply_size(*type);
        } else {
            throw fail(at + "unexpected keyword '" + kw + "'");
        }
    }
    if (!format_seen) throw fail("header has no format line");
    if (!vertex_seen) throw fail("header has no vertex element");

    PlyInfo local;
    PlyInfo& out_info = info ? *info : local;
    out_info = PlyInfo{};
    out_info.vertex_count = count;
    int rest = 0;
    std::map<std::string, const Prop*> by_name;
    for (const auto& p : props) {
        by_name[p.name] = &p;
        if (p.name.rfind("f_rest_", 0) == 0) ++rest;
    }
    int degree = -1;
    for (int d = 0; d <= kMaxShDegree; ++d)
        if (3 * (sh_coeff_count(d) - 1) == rest) degree = d;
    if (degree < 0) throw fail(std::to_string(rest) + " f_rest properties do not match any SH degree <= 3");
    out_info.sh_degree = degree;
    const auto expected = detail::ply_property_names(degree);
    for (const auto& n : expected) {
        const auto it = by_name.find(n);
        if (it == by_name.end()) throw fail("missing property '" + n + "'");
        if (it->second->type != detail::PlyType::kFloat)
            throw fail("line " + std::to_string(it->second->line) + ": property '" + n + "' must be float");
    }
    std::map<std::string, int> known;
    for (const auto& n : expected) known[n] = 1;
    for (const char* n : {"nx", "ny", "nz"}) known[n] = 2;
    known["label"] = 3;
    for (const auto& p : props) {
        const auto it = known.find(p.name);
        if (it == known.end()) throw fail("line " + std::to_string(p.line) + ": unknown property '" + p.name + "'");
        if (it->second == 2) out_info.has_normals = true;
    }
    const Prop* label = by_name.count("label") ? by_name["label"] : nullptr;
    if (label && label->type != detail::PlyType::kInt && label->type != detail::PlyType::kUInt &&
        label->type != detail::PlyType::kShort && label->type != detail::PlyType::kUShort &&
        label->type != detail::PlyType::kUChar && label->type != detail::PlyType::kChar)
        throw fail("label property must be an integer type");
    out_info.has_label = label != nullptr;
    if (!label) {
        out_info.warnings.push_back(name + ": no label property; all labels set to 0");
        if (!info) std::cerr << "warning: " << out_info.warnings.back() << "\n";
    }

    const std::size_t body = pos;
    if (stride == 0 && count > 0) throw fail("vertex element has no properties");
    if (bytes.size() - body < count * stride) {
        const std::size_t complete = stride ? (bytes.size() - body) / stride : 0;
        throw fail("truncated body: vertex " + std::to_string(complete) + " ends past byte offset " +
                   std::to_string(bytes.size()));
    }
    if (bytes.size() - body > count * stride)
        throw fail("trailing data after vertex " + std::to_string(count) + " at byte offset " +
                   std::to_string(body + count * stride));

    SplatScene<T> scene;
    scene.sh_degree = degree;
    scene.gaussians.resize(count);
    const std::size_t k = static_cast<std::size_t>(sh_coeff_count(degree));
    std::vector<std::size_t> off;
    for (const auto& n : expected) off.push_back(by_name[n]->offset);
    for (std::size_t v = 0; v < count; ++v) {
        const char* row = bytes.data() + body + v * stride;
        std::size_t f = 0;
        const auto get = [&]() { return static_cast<T>(detail::read_le<float>(row + off[f++])); };
        auto& g = scene.gaussians[v];
        for (int i = 0; i < 3; ++i) g.position[i] = get();
        g.sh.assign(k, Vec3<T>::Zero());
        for (int c = 0; c < 3; ++c) g.sh[0][c] = get();
        for (int c = 0; c < 3; ++c)
            for (std::size_t j = 1; j < k; ++j) g.sh[j][c] = get();
        g.opacity_logit = get();
        for (int i = 0; i < 3; ++i) g.log_scale[i] = get();
        for (int i = 0; i < 4; ++i) g.rotation[i] = get();
        g.label = 0;
        if (label) {
            const char* p = row + label->offset;
            switch (label->type) {
                case detail::PlyType::kInt: g.label = detail::read_le<std::int32_t>(p); break;
                case detail::PlyType::kUInt: g.label = static_cast<std::int32_t>(detail::read_le<std::uint32_t>(p)); break;
                case detail::PlyType::kShort: g.label = detail::read_le<std::int16_t>(p); break;
                case detail::PlyType::kUShort: g.label = detail::read_le<std::uint16_t>(p); break;
                case detail::PlyType::kUChar: g.label = static_cast<std::uint8_t>(*p); break;
                default: g.label = static_cast<std::int8_t>(*p); break;
            }
        }
    }
    return scene;
}

/// Missing label column: labels are 0 and a warning is recorded in `info`
/// (or printed to stderr when `info` is null).
template <typename T>
SplatScene<T> load_splats(const fs::path& path, PlyInfo* info = nullptr) {
    return parse_splats<T>(detail::read_file(path), info, path.string());
}

//------------------------------------------------------------------------------
// PNG

namespace detail {

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    char message[256] = {0};

    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

inline void png_error_fn(png_structp png, png_const_charp msg) {
    auto* r = static_cast<PngReader*>(png_get_error_ptr(png));
    std::snprintf(r->message, sizeof r->message, "%s", msg);
    png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

struct RawPng {
    int width = 0, height = 0, channels = 0, bit_depth = 0, color_type = 0;
    std::vector<std::uint8_t> data;  // rows, big-endian samples as stored
};

// Decoding happens in two setjmp-guarded phases with no C++ objects of
// automatic storage inside them.
inline bool decode_png_header(PngReader& r, RawPng& out) {
    if (setjmp(png_jmpbuf(r.png))) return false;
    png_init_io(r.png, r.fp);
    png_read_info(r.png, r.info);
    out.width = static_cast<int>(png_get_image_width(r.png, r.info));
    out.height = static_cast<int>(png_get_image_height(r.png, r.info));
    out.bit_depth = png_get_bit_depth(r.png, r.info);
    out.color_type = png_get_color_type(r.png, r.info);
    if (out.color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (png_get_interlace_type(r.png, r.info) != PNG_INTERLACE_NONE) png_set_interlace_handling(r.png);
    png_read_update_info(r.png, r.info);
    out.channels = png_get_channels(r.png, r.info);
    return true;
}

inline bool decode_png_body(PngReader& r, png_bytepp rows) {
    if (setjmp(png_jmpbuf(r.png))) return false;
    png_read_image(r.png, rows);
    png_read_end(r.png, nullptr);
    return true;
}

inline RawPng read_raw_png(const fs::path& path) {
    PngReader r;
    r.fp = std::fopen(path.string().c_str(), "rb");
    if (!r.fp) throw Error("cannot open " + path.string());
    std::uint8_t sig[8];
    if (std::fread(sig, 1, 8, r.fp) != 8 || png_sig_cmp(sig, 0, 8)) throw FormatError(path.string() + ": not a PNG file");
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &r, png_error_fn, png_warning_fn);
    if (!r.png) throw Error("libpng initialization failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw Error("libpng initialization failed");
    png_set_sig_bytes(r.png, 8);
    RawPng out;
    if (!decode_png_header(r, out)) throw FormatError(path.string() + ": " + r.message);
    const std::size_t rowbytes = png_get_rowbytes(r.png, r.info);
    out.data.resize(rowbytes * static_cast<std::size_t>(out.height));
    std::vector<png_bytep> rows(static_cast<std::size_t>(out.height));
    for (int y = 0; y < out.height; ++y) rows[y] = out.data.data() + rowbytes * static_cast<std::size_t>(y);
    if (!decode_png_body(r, rows.data())) throw FormatError(path.string() + ": " + r.message);
    return out;
}

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    std::FILE* fp = nullptr;
    char message[256] = {0};

    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

inline bool encode_png(PngWriter& w, int width, int height, int bit_depth, int color_type,
                       std::vector<png_bytep>& rows) {
    if (setjmp(png_jmpbuf(w.png))) return false;
    png_init_io(w.png, w.fp);
    png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png, w.info);
    png_write_image(w.png, rows.data());
    png_write_end(w.png, nullptr);
    return true;
}

inline void write_raw_png(const fs::path& path, int width, int height, int bit_depth, int color_type,
                          std::vector<std::uint8_t>& data) {
    PngWriter w;
    w.fp = std::fopen(path.string().c_str(), "wb");
    if (!w.fp) throw Error("cannot write " + path.string());
    w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &w, nullptr, nullptr);
    if (!w.png) throw Error("libpng initialization failed");
    png_set_error_fn(w.png, &w, [](png_structp p, png_const_charp msg) {
        auto* self = static_cast<PngWriter*>(png_get_error_ptr(p));
        std::snprintf(self->message, sizeof self->message, "%s", msg);
        png_longjmp(p, 1);
    }, png_warning_fn);
    w.info = png_create_info_struct(w.png);
    if (!w.info) throw Error("libpng initialization failed");
    const std::size_t rowbytes = data.size() / static_cast<std::size_t>(height);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) rows[y] = data.data() + rowbytes * static_cast<std::size_t>(y);
    if (!encode_png(w, width, height, bit_depth, color_type, rows)) throw Error(path.string() + ": " + w.message);
}

}  // namespace detail

inline std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0) * 255.0));
}

/// 8-bit gray, RGB or RGBA (alpha dropped) into [0,1] RGB.
template <typename T>
ImageBuffer<T> load_image(const fs::path& path) {
    const auto raw = detail::read_raw_png(path);
    if (raw.bit_depth != 8) throw FormatError(path.string() + ": expected an 8-bit image, got bit depth " + std::to_string(raw.bit_depth));
    if (raw.channels < 1 || raw.channels > 4) throw FormatError(path.string() + ": unsupported channel count");
    ImageBuffer<T> img(raw.width, raw.height);
    const bool gray = raw.channels <= 2;
    for (std::size_t p = 0; p < img.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c)
            img[p * 3 + c] = T(raw.data[p * raw.channels + (gray ? 0 : c)] / 255.0);
    return img;
}

template <typename T>
void save_image(const ImageBuffer<T>& img, const fs::path& path) {
    std::vector<std::uint8_t> data(img.data().size());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = to_byte(double(img.data()[i]));
    detail::write_raw_png(path, img.width(), img.height(), 8, PNG_COLOR_TYPE_RGB, data);
}

/// 16-bit single-channel ids.
inline SegmentationMap load_segmap(const fs::path& path) {
    const auto raw = detail::read_raw_png(path);
    if (raw.bit_depth != 16 || raw.color_type != PNG_COLOR_TYPE_GRAY)
        throw FormatError(path.string() + ": segmentation map must be 16-bit grayscale (bit depth " +
                          std::to_string(raw.bit_depth) + ", color type " + std::to_string(raw.color_type) + ")");
    SegmentationMap seg(raw.width, raw.height);
    for (std::size_t i = 0; i < seg.ids.size(); ++i)
        seg.ids[i] = (std::uint32_t(raw.data[2 * i]) << 8) | raw.data[2 * i + 1];
    return seg;
}

inline void save_segmap(const SegmentationMap& seg, const fs::path& path) {
    std::vector<std::uint8_t> data(seg.ids.size() * 2);
    for (std::size_t i = 0; i < seg.ids.size(); ++i) {
        if (seg.ids[i] > 0xffff) throw InvalidInput("segmentation id " + std::to_string(seg.ids[i]) + " exceeds 16 bits");
        data[2 * i] = static_cast<std::uint8_t>(seg.ids[i] >> 8);
        data[2 * i + 1] = static_cast<std::uint8_t>(seg.ids[i] & 0xff);
    }
    detail::write_raw_png(path, seg.width, seg.height, 16, PNG_COLOR_TYPE_GRAY, data);
}

inline void save_mask(const MaskBuffer& mask, const fs::path& path) {
    std::vector<std::uint8_t> data(mask.pixel_count());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = mask[i] ? 255 : 0;
    detail::write_raw_png(path, mask.width(), mask.height(), 8, PNG_COLOR_TYPE_GRAY, data);
}

/// Any 8-bit PNG; nonzero first channel is inside.
inline MaskBuffer load_mask(const fs::path& path) {
    const auto raw = detail::read_raw_png(path);
    if (raw.bit_depth != 8) throw FormatError(path.string() + ": mask must be 8-bit");
    MaskBuffer m(raw.width, raw.height);
    for (std::size_t i = 0; i < m.pixel_count(); ++i) m.set(i, raw.data[i * raw.channels] != 0);
    return m;
}

//------------------------------------------------------------------------------
// Cameras and datasets

struct CameraEntry {
    CameraModel camera;
    std::string image;   // relative to the camera file's directory
    std::optional<std::string> segmap;
};

inline nlohmann::json camera_to_json(const CameraEntry& e) {
    nlohmann::json j;
    const auto& c = e.camera;
    j["width"] = c.width;
    j["height"] = c.height;
    j["fx"] = c.fx;
    j["fy"] = c.fy;
    j["cx"] = c.cx;
    j["cy"] = c.cy;
    j["rotation"] = nlohmann::json::array();
    for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) j["rotation"].push_back(c.rotation(r, k));
    j["translation"] = {c.translation[0], c.translation[1], c.translation[2]};
    j["image"] = e.image;
    if (e.segmap) j["segmap"] = *e.segmap;
    return j;
}

inline CameraEntry camera_from_json(const nlohmann::json& j, std::size_t index) {
    const auto where = "camera " + std::to_string(index) + ": ";
    try {
        CameraEntry e;
        auto& c = e.camera;
        c.width = j.at("width").get<int>();
        c.height = j.at("height").get<int>();
        c.fx = j.at("fx").get<double>();
        c.fy = j.at("fy").get<double>();
        c.cx = j.at("cx").get<double>();
        c.cy = j.at("cy").get<double>();
        const auto& r = j.at("rotation");
        if (!r.is_array() || r.size() != 9) throw FormatError(where + "rotation must have 9 entries");
        for (int i = 0; i < 9; ++i) c.rotation(i / 3, i % 3) = r[i].get<double>();
        const auto& t = j.at("translation");
        if (!t.is_array() || t.size() != 3) throw FormatError(where + "translation must have 3 entries");
        for (int i = 0; i < 3; ++i) c.translation[i] = t[i].get<double>();
        e.image = j.at("image").get<std::string>();
        if (j.contains("segmap") && !j["segmap"].is_null()) e.segmap = j["segmap"].get<std::string>();
        c.validate();
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(where + ex.what());
    } catch (const InvalidInput& ex) {
        throw FormatError(where + ex.what());
    }
}

inline std::vector<CameraEntry> load_cameras(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (!j.is_array()) throw FormatError(path.string() + ": expected a JSON array of cameras");
    std::vector<CameraEntry> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(camera_from_json(j[i], i));
    return out;
}

inline void save_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path.string());
    os << j.dump(2) << "\n";
}

inline void save_cameras(const std::vector<CameraEntry>& cams, const fs::path& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& c : cams) j.push_back(camera_to_json(c));
    save_json(j, path);
}

template <typename T>
struct Dataset {
    fs::path root;
    std::vector<CameraEntry> entries;
    std::vector<CameraModel> cameras;
    std::vector<ImageBuffer<T>> images;
    std::vector<std::optional<SegmentationMap>> segmaps;

    bool has_all_segmaps() const {
        return std::all_of(segmaps.begin(), segmaps.end(), [](const auto& s) { return s.has_value(); });
    }
    std::vector<SegmentationMap> segmap_list() const {
        std::vector<SegmentationMap> out;
        for (std::size_t v = 0; v < segmaps.size(); ++v) {
            if (!segmaps[v]) throw InvalidInput("view " + std::to_string(v) + " has no segmentation map");
            out.push_back(*segmaps[v]);
        }
        return out;
    }
};

template <typename T>
Dataset<T> load_dataset(const fs::path& camera_file) {
    Dataset<T> ds;
    ds.root = camera_file.parent_path();
    ds.entries = load_cameras(camera_file);
    for (std::size_t v = 0; v < ds.entries.size(); ++v) {
        const auto& e = ds.entries[v];
        const auto image_path = ds.root / e.image;
        if (!fs::exists(image_path)) throw Error("view " + std::to_string(v) + ": missing image " + image_path.string());
        auto img = load_image<T>(image_path);
        if (img.width() != e.camera.width || img.height() != e.camera.height)
            throw FormatError("view " + std::to_string(v) + ": image " + image_path.string() + " is " +
                              std::to_string(img.width()) + "x" + std::to_string(img.height()) + " but the camera is " +
                              std::to_string(e.camera.width) + "x" + std::to_string(e.camera.height));
        std::optional<SegmentationMap> seg;
        if (e.segmap) {
            const auto seg_path = ds.root / *e.segmap;
            if (!fs::exists(seg_path))
                throw Error("view " + std::to_string(v) + ": missing segmentation map " + seg_path.string());
            seg = load_segmap(seg_path);
            if (seg->width != e.camera.width || seg->height != e.camera.height)
                throw FormatError("view " + std::to_string(v) + ": segmentation map " + seg_path.string() +
                                  " does not match the camera size");
        }
        ds.cameras.push_back(e.camera);
        ds.images.push_back(std::move(img));
        ds.segmaps.push_back(std::move(seg));
    }
    return ds;
}

}  // namespace coregs
