#pragma once

// Umbrella header.
#include "adaptct/core.hpp"
#include "adaptct/rng.hpp"
#include "adaptct/phantoms.hpp"
#include "adaptct/phantom_io.hpp"
#include "adaptct/projector.hpp"
#include "adaptct/recon.hpp"
#include "adaptct/env.hpp"
#include "adaptct/nn.hpp"
#include "adaptct/agent.hpp"
#include "adaptct/trainer.hpp"
#include "adaptct/eval.hpp"
#include "adaptct/config.hpp"
#include "adaptct/checkpoint.hpp"
#include "adaptct/report.hpp"
#include "adaptct/cli.hpp"
