// Copyright (c) 2026 The pvadbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pvad/rng.hpp"
#include "pvad/speaker.hpp"

namespace {

using namespace pvad;
using speaker::SpeakerEmbedding;
using Catch::Approx;

dsp::PcmSignal random_signal(Rng& rng, int n_samples) {
  dsp::PcmSignal s;
  s.samples.resize(static_cast<std::size_t>(n_samples));
  for (auto& v : s.samples) v = rng.uniform(-0.5, 0.5);
  return s;
}

SpeakerEmbedding basis_embedding(int dim, int axis) {
  SpeakerEmbedding e;
  e.values = Eigen::VectorXd::Zero(dim);
  e.values(axis) = 1.0;
  e.normalized = true;
  return e;
}

}  // namespace

TEST_CASE("encoder embeddings are unit norm and deterministic") {
  auto encoder = speaker::build_encoder(404);
  speaker::EncoderDims d;
  Rng rng(12);
  const auto sig = random_signal(rng, 8000);
  const auto feats = dsp::log_mel_features(sig);

  const auto e1 = speaker::speaker_encoder_embed(encoder, d, feats);
  const auto e2 = speaker::speaker_encoder_embed(encoder, d, feats);
  REQUIRE(e1.values.size() == 256);
  CHECK(e1.normalized);
  CHECK(e1.values.norm() == Approx(1.0).margin(1e-9));
  for (int i = 0; i < 256; ++i) CHECK(e1.values(i) == e2.values(i));
  CHECK_FALSE(e1.is_zero());

  SECTION("empty features are rejected") {
    dsp::LogMelFrames empty;
    empty.frames.resize(0, 40);
    CHECK_THROWS_AS(speaker::speaker_encoder_embed(encoder, d, empty), DataError);
  }
}

TEST_CASE("enrollment embedding protocol") {
  auto encoder = speaker::build_encoder(7);
  speaker::EncoderDims d;
  Rng rng(55);
  std::vector<dsp::PcmSignal> segments;
  for (int i = 0; i < 3; ++i) segments.push_back(random_signal(rng, 6400));

  const auto combined = speaker::enrollment_embedding(encoder, d, segments);
  CHECK(combined.values.norm() == Approx(1.0).margin(1e-9));

  SECTION("three identical segments collapse to the single-segment embedding") {
    std::vector<dsp::PcmSignal> same = {segments[0], segments[0], segments[0]};
    const auto triple = speaker::enrollment_embedding(encoder, d, same);
    const auto single =
        speaker::speaker_encoder_embed(encoder, d, dsp::log_mel_features(segments[0]));
    for (int i = 0; i < 256; ++i) CHECK(triple.values(i) == Approx(single.values(i)).margin(1e-12));
  }

  SECTION("segment order does not matter") {
    std::vector<dsp::PcmSignal> reversed = {segments[2], segments[1], segments[0]};
    const auto fwd = speaker::enrollment_embedding(encoder, d, segments);
    const auto rev = speaker::enrollment_embedding(encoder, d, reversed);
    for (int i = 0; i < 256; ++i) CHECK(fwd.values(i) == Approx(rev.values(i)).margin(1e-12));
  }

  SECTION("segment count is enforced") {
    std::vector<dsp::PcmSignal> two = {segments[0], segments[1]};
    CHECK_THROWS_AS(speaker::enrollment_embedding(encoder, d, two), DataError);
    std::vector<dsp::PcmSignal> six(6, segments[0]);
    CHECK_THROWS_AS(speaker::enrollment_embedding(encoder, d, six), DataError);
  }
}

TEST_CASE("orthogonal pair averaging arithmetic") {
  const auto e1 = basis_embedding(256, 0);
  const auto e2 = basis_embedding(256, 1);
  const auto mean = speaker::mean_embedding({e1, e2});
  CHECK(mean.values.norm() == Approx(std::sqrt(2.0) / 2.0).margin(1e-12));
  const auto unit = speaker::normalized(mean);
  CHECK(unit.values(0) == Approx(std::sqrt(0.5)).margin(1e-12));
  CHECK(unit.values(1) == Approx(std::sqrt(0.5)).margin(1e-12));
  CHECK(unit.values.norm() == Approx(1.0).margin(1e-12));
}

TEST_CASE("cosine similarity frozen values and properties") {
  SpeakerEmbedding a, b;
  a.values = Eigen::VectorXd(3);
  a.values << 1, 2, 3;
  b.values = Eigen::VectorXd(3);
  b.values << 4, 5, 6;
  CHECK(speaker::cosine_similarity(a, b) == Approx(32.0 / std::sqrt(14.0 * 77.0)).margin(1e-12));
  CHECK(speaker::cosine_similarity(a, b) == Approx(0.974632).margin(1e-6));
  CHECK(speaker::cosine_similarity(a, a) == Approx(1.0).margin(1e-12));
  CHECK(speaker::cosine_similarity(basis_embedding(4, 0), basis_embedding(4, 1)) == 0.0);

  SECTION("symmetry and positive scale invariance") {
    CHECK(speaker::cosine_similarity(a, b) == Approx(speaker::cosine_similarity(b, a)).margin(1e-15));
    SpeakerEmbedding scaled;
    scaled.values = b.values * 2.5;
    CHECK(speaker::cosine_similarity(a, scaled) ==
          Approx(speaker::cosine_similarity(a, b)).margin(1e-12));
  }

  SECTION("zero embeddings are rejected") {
    const auto z = SpeakerEmbedding::zero();
    SpeakerEmbedding v;
    v.values = Eigen::VectorXd::Ones(256);
    CHECK_THROWS_AS(speaker::cosine_similarity(z, v), UsageError);
    CHECK_THROWS_AS(speaker::cosine_similarity(v, z), UsageError);
  }

  SECTION("dimension mismatch is rejected") {
    SpeakerEmbedding short_e;
    short_e.values = Eigen::VectorXd::Ones(5);
    CHECK_THROWS_AS(speaker::cosine_similarity(a, short_e), ShapeError);
  }
}

TEST_CASE("zero sentinel detection") {
  auto z = SpeakerEmbedding::zero();
  CHECK(z.is_zero());
  z.values(200) = 1e-300;
  CHECK_FALSE(z.is_zero());
}
