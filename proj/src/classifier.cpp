#include "zsar/classifier.hpp"

#include "zsar/errors.hpp"

#include <algorithm>
#include <cmath>

namespace zsar {

namespace {

EmbeddingVector mean_impl(const EmbeddingMatrix& rows, bool normalize_rows, const char* what) {
    if (rows.rows() == 0 || rows.dim() == 0) throw DomainError(std::string(what) + ": no embeddings to average");
    const std::size_t d = rows.dim();
    std::vector<double> sum(d, 0.0);
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const auto r = rows.row(i);
        double scale = 1.0;
        if (normalize_rows) {
            double sq = 0.0;
            for (float v : r) sq += static_cast<double>(v) * v;
            if (!(sq > 0.0) || !std::isfinite(sq)) {
                throw DegenerateEmbeddingError(std::string(what) + ": row " + std::to_string(i) + " has zero norm");
            }
            scale = 1.0 / std::sqrt(sq);
        }
        for (std::size_t k = 0; k < d; ++k) sum[k] += static_cast<double>(r[k]) * scale;
    }
    const double n = static_cast<double>(rows.rows());
    for (auto& v : sum) v /= n;
    return EmbeddingVector{std::move(sum)};
}

}  // namespace

EmbeddingVector mean_rows(const EmbeddingMatrix& rows) { return mean_impl(rows, false, "mean_rows"); }

EmbeddingVector video_embedding(const EmbeddingMatrix& frame_embs, bool normalize_rows) {
    return mean_impl(frame_embs, normalize_rows, "video_embedding");
}

EmbeddingVector class_embedding(const EmbeddingMatrix& text_embs, bool normalize_rows) {
    return mean_impl(text_embs, normalize_rows, "class_embedding");
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw ShapeError("cosine: dim " + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
    }
    double dot = 0.0;
    for (std::size_t k = 0; k < a.dim(); ++k) dot += a.values[k] * b.values[k];
    const double na = a.norm();
    const double nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0) || !std::isfinite(na) || !std::isfinite(nb)) {
        throw DegenerateEmbeddingError("cosine: zero-norm or non-finite embedding");
    }
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

Prediction predict(const EmbeddingVector& vbar, std::span<const ClassEmbedding> classes) {
    if (classes.empty()) throw DomainError("predict: no classes");
    const double nv = vbar.norm();
    if (!(nv > 0.0) || !std::isfinite(nv)) throw DegenerateEmbeddingError("predict: video embedding has zero norm");

    Prediction p;
    p.ranking.reserve(classes.size());
    for (const auto& c : classes) {
        if (c.z.dim() != vbar.dim()) {
            throw ShapeError("predict: class '" + c.action.raw_id + "' has dim " + std::to_string(c.z.dim()) +
                             ", video has " + std::to_string(vbar.dim()));
        }
        const double nz = c.z.norm();
        if (!(nz > 0.0) || !std::isfinite(nz)) {
            throw DegenerateEmbeddingError("predict: class '" + c.action.raw_id + "' embedding has zero norm");
        }
        p.ranking.emplace_back(c.action, cosine(vbar, c.z));
    }
    std::stable_sort(p.ranking.begin(), p.ranking.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first.index < b.first.index;
    });
    p.predicted = p.ranking.front().first;
    return p;
}

bool topk_hit(const Prediction& prediction, const ActionClass& truth, std::size_t k) {
    if (k < 1 || k > prediction.ranking.size()) {
        throw DomainError("topk_hit: k=" + std::to_string(k) + " outside [1, " +
                          std::to_string(prediction.ranking.size()) + "]");
    }
    for (std::size_t i = 0; i < k; ++i) {
        if (prediction.ranking[i].first.index == truth.index &&
            prediction.ranking[i].first.raw_id == truth.raw_id) {
            return true;
        }
    }
    return false;
}

EmbeddingTable class_embedding_table(std::span<const ClassEmbedding> classes) {
    if (classes.empty()) throw DomainError("no class embeddings to write");
    EmbeddingTable table(classes.front().z.dim());
    std::vector<float> row;
    for (const auto& c : classes) {
        row.assign(c.z.values.begin(), c.z.values.end());
        table.put(c.action.raw_id, row);
    }
    return table;
}

void write_class_embeddings(const std::filesystem::path& path, std::span<const ClassEmbedding> classes) {
    class_embedding_table(classes).write(path);
}

}  // namespace zsar
