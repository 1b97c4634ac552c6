// Copyright 2026 The wbcbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "wbc/core/rng.hpp"
#include "wbc/data/image.hpp"
#include "wbc/data/types.hpp"

namespace wbc::data {

struct SynthManifests {
  DatasetManifest train;         // SYNTH_SOURCE coloring
  DatasetManifest test_source;   // held-out samples, source coloring
  DatasetManifest test_shifted;  // the same held-out samples, shifted coloring
};

// Renders one cell image. Geometry and texture are drawn from `geometry_rng`;
// `shift` (may be null) recolors without consuming any randomness, so the
// same stream rendered with and without it yields a matched pair that
// differs only in coloring.
Image render_synth_cell(int size, WbcClass cls, Rng& geometry_rng, const ShiftParams* shift);

// Renders the full two-domain dataset under cfg.cache_dir:
//   train/<class>/img_#####.png         test_source/<class>/img_#####.png
//   test_shifted/<class>/img_#####.png
// Rendering is skipped when a fingerprint file written on success already
// matches cfg; images are byte-identical either way. Returns the three
// manifests in lexicographic record order.
SynthManifests make_synthetic_domain_pair(const SynthConfig& cfg);

}  // namespace wbc::data
