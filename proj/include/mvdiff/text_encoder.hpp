// Copyright (c) 2026 mvdiff contributors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic toy text embedder: lowercase word tokens hashed into a
// seeded embedding table. Token id 0 is reserved for the null prompt used by
// the unconditional branch of classifier-free guidance.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mvdiff/tensor.hpp"

namespace mvd {

// "A DSLR photo of <prompt>, 3d asset". Throws DomainError on an empty prompt.
std::string prompt_template(const std::string& prompt);

struct TextEmbedding {
    std::vector<std::string> words;  // tokenizer trace
    std::vector<std::int64_t> ids;
    Tensor tokens;  // [T, E]
    Tensor pooled;  // [E], mean over tokens
};

class ToyTextEncoder {
public:
    static constexpr std::int64_t kNullToken = 0;

    explicit ToyTextEncoder(std::size_t dim = 16, std::size_t vocab = 1024, std::uint64_t seed = 7);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t vocab() const noexcept { return vocab_; }

    // Splits on anything that is not a letter or digit and lowercases.
    static std::vector<std::string> tokenize(const std::string& text);
    std::int64_t token_id(const std::string& word) const;

    // Embeds `text` as given.
    TextEmbedding embed_raw(const std::string& text) const;
    // Applies prompt_template first.
    TextEmbedding encode(const std::string& prompt) const;
    TextEmbedding null_embedding() const;

private:
    std::size_t dim_;
    std::size_t vocab_;
    Tensor table_;  // [vocab, dim]
};

}  // namespace mvd
