#include "syncd/image_io.hpp"

#include "syncd/tensor_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

#include <zlib.h>

namespace syncd {

namespace {
void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

void write_chunk(std::ofstream& f, const char type[4], const std::vector<unsigned char>& data) {
    std::vector<unsigned char> hdr;
    put_u32(hdr, static_cast<std::uint32_t>(data.size()));
    f.write(reinterpret_cast<const char*>(hdr.data()), 4);
    f.write(type, 4);
    if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    std::vector<unsigned char> crcb;
    put_u32(crcb, static_cast<std::uint32_t>(crc));
    f.write(reinterpret_cast<const char*>(crcb.data()), 4);
}
}  // namespace

void write_png_preview(const std::filesystem::path& path, const Tensor& image) {
    if (image.rank() != 3) throw ShapeError("png preview expects h x w x c, got " + image.shape_str());
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    const std::size_t out_c = c >= 3 ? 3 : 1;

    // Per-channel min-max to [0, 255].
    std::vector<double> lo(out_c, std::numeric_limits<double>::infinity());
    std::vector<double> hi(out_c, -std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < h * w; ++i) {
        for (std::size_t k = 0; k < out_c; ++k) {
            const double v = image[i * c + k];
            lo[k] = std::min(lo[k], v);
            hi[k] = std::max(hi[k], v);
        }
    }
    std::vector<unsigned char> raw((w * out_c + 1) * h);
    std::size_t at = 0;
    for (std::size_t r = 0; r < h; ++r) {
        raw[at++] = 0;  // filter: none
        for (std::size_t col = 0; col < w; ++col) {
            for (std::size_t k = 0; k < out_c; ++k) {
                const double range = hi[k] - lo[k];
                const double v = range > 0 ? (image[(r * w + col) * c + k] - lo[k]) / range : 0.5;
                raw[at++] = static_cast<unsigned char>(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
            }
        }
    }

    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> comp(comp_len);
    if (compress(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size())) != Z_OK)
        throw IoError("png deflate failed");
    comp.resize(comp_len);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open png for write: " + path.string());
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    f.write(reinterpret_cast<const char*>(sig), 8);
    std::vector<unsigned char> ihdr;
    put_u32(ihdr, static_cast<std::uint32_t>(w));
    put_u32(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);                                  // bit depth
    ihdr.push_back(out_c == 3 ? 2 : 0);                 // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    write_chunk(f, "IHDR", ihdr);
    write_chunk(f, "IDAT", comp);
    write_chunk(f, "IEND", {});
}

}  // namespace syncd
