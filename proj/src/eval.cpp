#include "syncd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "syncd/tensor_io.hpp"

namespace syncd {

double geometric_score(double text_score, double image_score) {
    if (text_score < 0.0 || text_score > 1.0)
        throw RangeError("text_score out of [0, 1]: " + std::to_string(text_score));
    if (image_score < 0.0 || image_score > 1.0)
        throw RangeError("image_score out of [0, 1]: " + std::to_string(image_score));
    return std::sqrt(text_score * image_score);
}

ClusterSimilarity intra_cluster_similarity(const std::vector<ImageSet>& sets,
                                           const FeatureExtractor& extractor) {
    ClusterSimilarity out;
    for (const ImageSet& set : sets) {
        if (set.images.size() < 2) {
            std::cerr << "warning: set " << set.set_id
                      << " has fewer than 2 images; skipping similarity\n";
            out.skipped.push_back(set.set_id);
            continue;
        }
        std::vector<std::vector<double>> embeddings;
        for (const Tensor& img : set.images) embeddings.push_back(extractor.embed(img));
        out.per_set.push_back(pairwise_similarity(embeddings));
        out.set_ids.push_back(set.set_id);
    }
    if (!out.per_set.empty()) {
        double sum = 0.0;
        for (double v : out.per_set) sum += v;
        out.mean = sum / static_cast<double>(out.per_set.size());
    }
    return out;
}

Tensor masked_crop(const Tensor& image, const std::vector<std::uint8_t>& mask,
                   std::size_t mask_h, std::size_t mask_w, double fill) {
    if (image.rank() != 3) throw ShapeError("masked_crop expects h x w x c");
    const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
    if (mask_h != h || mask_w != w || mask.size() != h * w)
        throw ShapeError("mask size does not match image");

    std::size_t r0 = h, r1 = 0, c0 = w, c1 = 0;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t col = 0; col < w; ++col) {
            if (!mask[r * w + col]) continue;
            r0 = std::min(r0, r);
            r1 = std::max(r1, r);
            c0 = std::min(c0, col);
            c1 = std::max(c1, col);
        }
    }
    if (r0 > r1) throw EmptyMaskError("masked_crop: mask has no foreground pixels");

    Tensor out({r1 - r0 + 1, c1 - c0 + 1, c});
    for (std::size_t r = r0; r <= r1; ++r) {
        for (std::size_t col = c0; col <= c1; ++col) {
            const bool fg = mask[r * w + col] != 0;
            for (std::size_t k = 0; k < c; ++k)
                out[((r - r0) * (c1 - c0 + 1) + (col - c0)) * c + k] =
                    fg ? image[(r * w + col) * c + k] : fill;
        }
    }
    return out;
}

std::vector<ScoreRow> read_score_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open score csv: " + path.string());
    std::vector<ScoreRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string id, ts, is;
        if (!std::getline(ss, id, ',') || !std::getline(ss, ts, ',') || !std::getline(ss, is))
            throw IoError("malformed score row at line " + std::to_string(line_no));
        if (line_no == 1 && id == "sample_id") continue;  // optional header
        ScoreRow row;
        row.sample_id = id;
        try {
            row.text_score = std::stod(ts);
            row.image_score = std::stod(is);
        } catch (const std::exception&) {
            throw IoError("non-numeric score at line " + std::to_string(line_no));
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<ScoreRow> combine_scores(std::vector<ScoreRow> rows) {
    for (ScoreRow& r : rows) r.combined = geometric_score(r.text_score, r.image_score);
    return rows;
}

void write_score_csv(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open score csv for write: " + path.string());
    f << "sample_id,text_score,image_score,geometric_score\n";
    double st = 0.0, si = 0.0, sg = 0.0;
    for (const ScoreRow& r : rows) {
        f << r.sample_id << "," << r.text_score << "," << r.image_score << "," << r.combined
          << "\n";
        st += r.text_score;
        si += r.image_score;
        sg += r.combined;
    }
    if (!rows.empty()) {
        const auto n = static_cast<double>(rows.size());
        f << "# summary\n";
        f << "# method,text_alignment,image_alignment,geometric_score\n";
        f << "# mean," << st / n << "," << si / n << "," << sg / n << "\n";
    }
}

}  // namespace syncd
