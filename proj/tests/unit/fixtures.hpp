#pragma once

#include "urbanflux/features.hpp"
#include "urbanflux/nets.hpp"
#include "urbanflux/synth.hpp"

namespace testutil {

/// A small synthetic city, sampled and normalized. Built once per process.
const urbanflux::Dataset& synth_dataset();
const urbanflux::SynthSpec& synth_spec_small();

/// T and D networks briefly trained on synth_dataset().
const urbanflux::MlpModel& trained_t();
const urbanflux::MlpModel& trained_d();

}  // namespace testutil
