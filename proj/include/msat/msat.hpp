#pragma once

// Everything: ingest, representation, model, training, generation, metrics.

#include "msat/config.hpp"
#include "msat/dataset.hpp"
#include "msat/error.hpp"
#include "msat/generate.hpp"
#include "msat/ingest.hpp"
#include "msat/metrics.hpp"
#include "msat/midi.hpp"
#include "msat/nn/checkpoint.hpp"
#include "msat/nn/model.hpp"
#include "msat/representation.hpp"
#include "msat/rng.hpp"
#include "msat/song.hpp"
#include "msat/train.hpp"
#include "msat/vocab.hpp"
