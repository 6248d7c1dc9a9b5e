#pragma once

// Sentence-embedding providers.
//
// HTTP contract (frozen):
//   POST {base_url}/v1/embed
//   request:  {"model": str, "texts": [str, ...]}
//   response: {"vectors": [[number, ...], ...]}  one vector per text, all the same length
//
// Fixture files are JSONL, one {"hash": hex16, "text": str, "vector": [number, ...]} per line,
// where hash is the 64-bit FNV-1a of the UTF-8 text.

#include <cctype>
#include <cmath>
#include <fstream>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "featscope/detail/binary_io.hpp"
#include "featscope/detail/http.hpp"
#include "featscope/error.hpp"

namespace featscope {

using Embedding = Eigen::VectorXd;

class Embedder {
public:
    virtual ~Embedder() = default;
    /// One vector per text. Throws EndpointError when the provider cannot answer.
    virtual std::vector<Embedding> embed(std::span<const std::string> texts) = 0;
    virtual std::string provider_id() const = 0;

    Embedding embed_one(const std::string& text) {
        const std::string one[] = {text};
        auto v = embed(one);
        if (v.size() != 1) throw EndpointError("embedder returned " + std::to_string(v.size()) + " vectors for 1 text");
        return std::move(v.front());
    }
};

/// Hashed bag of lower-cased words; deterministic and offline.
class ToyEmbedder : public Embedder {
public:
    explicit ToyEmbedder(std::size_t dim = 64) : dim_(dim) {
        if (dim == 0) throw ValidationError("ToyEmbedder dim must be positive");
    }

    std::vector<Embedding> embed(std::span<const std::string> texts) override {
        std::vector<Embedding> out;
        for (const auto& t : texts) {
            Embedding v = Embedding::Zero(static_cast<Eigen::Index>(dim_));
            std::string word;
            auto flush = [&] {
                if (word.empty()) return;
                const auto h = detail::fnv1a64(word);
                v(static_cast<Eigen::Index>(h % dim_)) += (h >> 63) ? -1.0 : 1.0;
                word.clear();
            };
            for (char c : t) {
                if (std::isalnum(static_cast<unsigned char>(c))) word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                else flush();
            }
            flush();
            out.push_back(std::move(v));
        }
        return out;
    }

    std::string provider_id() const override { return "toy-bow-" + std::to_string(dim_); }

private:
    std::size_t dim_;
};

/// Wraps a plain function of one text; used for scripted mocks.
class FunctionEmbedder : public Embedder {
public:
    FunctionEmbedder(std::function<Embedding(const std::string&)> fn, std::string id = "function")
        : fn_(std::move(fn)), id_(std::move(id)) {}

    std::vector<Embedding> embed(std::span<const std::string> texts) override {
        std::vector<Embedding> out;
        for (const auto& t : texts) out.push_back(fn_(t));
        return out;
    }
    std::string provider_id() const override { return id_; }

private:
    std::function<Embedding(const std::string&)> fn_;
    std::string id_;
};

struct EmbeddingRecord {
    std::string text;
    Embedding vector;
};

inline void write_embedding_fixture(std::span<const EmbeddingRecord> records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& r : records) {
        nlohmann::json j = {{"hash", detail::hex64(detail::fnv1a64(r.text))},
                            {"text", r.text},
                            {"vector", std::vector<double>(r.vector.data(), r.vector.data() + r.vector.size())}};
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write failed: " + path);
}

/// Serves vectors recorded in a fixture file; unknown texts are an EndpointError.
class FixtureEmbedder : public Embedder {
public:
    explicit FixtureEmbedder(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open embedding fixture " + path);
        std::string line;
        std::size_t lineno = 0;
        std::uint64_t digest = detail::kFnvOffset;
        while (std::getline(in, line)) {
            ++lineno;
            digest = detail::fnv1a64(line, digest);
            if (line.empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                const auto text = j.at("text").get<std::string>();
                const auto hash = j.at("hash").get<std::string>();
                if (hash != detail::hex64(detail::fnv1a64(text)))
                    throw FormatError(path + ":" + std::to_string(lineno) + ": hash does not match text");
                const auto values = j.at("vector").get<std::vector<double>>();
                if (values.empty()) throw FormatError(path + ":" + std::to_string(lineno) + ": empty vector");
                if (dim_ == 0) dim_ = values.size();
                if (values.size() != dim_) throw FormatError(path + ":" + std::to_string(lineno) + ": vector width differs");
                vectors_[hash] = Eigen::Map<const Embedding>(values.data(), static_cast<Eigen::Index>(values.size()));
                texts_[hash] = text;
            } catch (const nlohmann::json::exception& e) {
                throw FormatError(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        id_ = "fixture-" + detail::hex64(digest);
    }

    std::vector<Embedding> embed(std::span<const std::string> texts) override {
        std::vector<Embedding> out;
        for (const auto& t : texts) {
            const auto key = detail::hex64(detail::fnv1a64(t));
            const auto it = vectors_.find(key);
            if (it == vectors_.end() || texts_.at(key) != t) throw EndpointError("text not in embedding fixture: " + t);
            out.push_back(it->second);
        }
        return out;
    }

    std::string provider_id() const override { return id_; }
    std::size_t size() const { return vectors_.size(); }
    std::size_t dim() const { return dim_; }

private:
    std::unordered_map<std::string, Embedding> vectors_;
    std::unordered_map<std::string, std::string> texts_;
    std::size_t dim_ = 0;
    std::string id_;
};

struct EmbedderEndpoint : HttpEndpoint {
    std::string model = "all-mpnet-base-v2";
};

class HttpEmbedder : public Embedder {
public:
    explicit HttpEmbedder(EmbedderEndpoint ep) : ep_(std::move(ep)), limiter_((ep_.validate(), ep_.rate_limit_rps)) {}

    std::vector<Embedding> embed(std::span<const std::string> texts) override {
        const nlohmann::json body = {{"model", ep_.model}, {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
        const auto reply = detail::post_json(ep_, limiter_, "/v1/embed", body);
        std::vector<Embedding> out;
        try {
            const auto& vectors = reply.at("vectors");
            if (vectors.size() != texts.size())
                throw EndpointError("embedder returned " + std::to_string(vectors.size()) + " vectors for " +
                                    std::to_string(texts.size()) + " texts");
            for (const auto& v : vectors) {
                const auto values = v.get<std::vector<double>>();
                if (!out.empty() && static_cast<Eigen::Index>(values.size()) != out.front().size())
                    throw EndpointError("embedder returned vectors of differing width");
                out.emplace_back(Eigen::Map<const Embedding>(values.data(), static_cast<Eigen::Index>(values.size())));
            }
        } catch (const nlohmann::json::exception& e) {
            throw EndpointError(std::string("malformed embedding reply: ") + e.what());
        }
        return out;
    }

    std::string provider_id() const override { return "http:" + ep_.model; }

private:
    EmbedderEndpoint ep_;
    detail::RateLimiter limiter_;
};

}  // namespace featscope
