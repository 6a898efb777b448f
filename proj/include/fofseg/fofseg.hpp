#ifndef FOFSEG_FOFSEG_HPP
#define FOFSEG_FOFSEG_HPP

#include "fofseg/appearance.hpp"
#include "fofseg/config.hpp"
#include "fofseg/error.hpp"
#include "fofseg/eval.hpp"
#include "fofseg/flowio.hpp"
#include "fofseg/fof.hpp"
#include "fofseg/grid.hpp"
#include "fofseg/pipeline.hpp"
#include "fofseg/sampler.hpp"
#include "fofseg/synth.hpp"

#endif  // FOFSEG_FOFSEG_HPP
