#pragma once

#include <cstddef>

#include "nexus/model.hpp"
#include "nexus/volume.hpp"

namespace nexus {

/// Labels every brain pixel of a raw volume with the argmax class of the
/// model's probability output (ties to the lower label); background
/// pixels (zero in all modalities) stay 0. The volume is per-slice
/// normalized internally, patch pairs are standardized exactly as in
/// training, and patches are batched for throughput — per-pixel semantics
/// are unchanged by the batching.
LabelMap segment_volume(NexusModel& model, const VolumeSet& vol,
                        std::size_t batch_size = 256);

/// Same, restricted to slices [slice_begin, slice_end); other slices
/// stay 0. Used for reduced-scale evaluations.
LabelMap segment_slices(NexusModel& model, const VolumeSet& vol, std::size_t slice_begin,
                        std::size_t slice_end, std::size_t batch_size = 256);

} // namespace nexus
