#pragma once

// Umbrella header for the pipeline library.

#include "pemuta/assessor.hpp"
#include "pemuta/dataset.hpp"
#include "pemuta/error.hpp"
#include "pemuta/evalharness.hpp"
#include "pemuta/layout.hpp"
#include "pemuta/llmclient.hpp"
#include "pemuta/metrics.hpp"
#include "pemuta/openai_provider.hpp"
#include "pemuta/prompting.hpp"
#include "pemuta/reconstruct.hpp"
#include "pemuta/report.hpp"
#include "pemuta/rubric.hpp"
