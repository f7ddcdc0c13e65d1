// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0

#include "mvdiff/text_encoder.hpp"

#include <cctype>
#include <random>

#include "mvdiff/errors.hpp"

namespace mvd {

std::string prompt_template(const std::string& prompt) {
    if (prompt.empty()) throw DomainError("prompt must not be empty");
    return "A DSLR photo of " + prompt + ", 3d asset";
}

ToyTextEncoder::ToyTextEncoder(std::size_t dim, std::size_t vocab, std::uint64_t seed)
    : dim_(dim), vocab_(vocab), table_({vocab, dim}) {
    if (dim == 0 || vocab < 2) throw DomainError("ToyTextEncoder: need dim >= 1 and vocab >= 2");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& v : table_.data()) v = n(rng);
}

std::vector<std::string> ToyTextEncoder::tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::int64_t ToyTextEncoder::token_id(const std::string& word) const {
    // FNV-1a, 64 bit
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : word) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return 1 + static_cast<std::int64_t>(h % (vocab_ - 1));
}

namespace {

TextEmbedding gather_rows(const Tensor& table, std::vector<std::string> words, std::vector<std::int64_t> ids) {
    const std::size_t dim = table.dim(1), t = ids.size();
    TextEmbedding e;
    e.tokens = Tensor({t, dim});
    e.pooled = Tensor({dim});
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j < dim; ++j) {
            const double v = table[static_cast<std::size_t>(ids[i]) * dim + j];
            e.tokens[i * dim + j] = v;
            e.pooled[j] += v;
        }
    for (std::size_t j = 0; j < dim; ++j) e.pooled[j] /= static_cast<double>(t);
    e.words = std::move(words);
    e.ids = std::move(ids);
    return e;
}

}  // namespace

TextEmbedding ToyTextEncoder::embed_raw(const std::string& text) const {
    auto words = tokenize(text);
    if (words.empty()) return null_embedding();
    std::vector<std::int64_t> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(token_id(w));
    return gather_rows(table_, std::move(words), std::move(ids));
}

TextEmbedding ToyTextEncoder::encode(const std::string& prompt) const { return embed_raw(prompt_template(prompt)); }

TextEmbedding ToyTextEncoder::null_embedding() const {
    return gather_rows(table_, {"<null>"}, {kNullToken});
}

}  // namespace mvd
