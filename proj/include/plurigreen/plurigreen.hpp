// Convenience umbrella: the full library behind one include.

#pragma once

#include "plurigreen/core.hpp"
#include "plurigreen/hprinciple.hpp"
#include "plurigreen/pullback.hpp"
#include "plurigreen/relax.hpp"
#include "plurigreen/run.hpp"
#include "plurigreen/sections.hpp"
#include "plurigreen/weights.hpp"
