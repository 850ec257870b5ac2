#pragma once

// Everything except the HTTP binding and CLI (see http_server.hpp, cli.hpp).

#include "vibraforge/commands.hpp"
#include "vibraforge/config.hpp"
#include "vibraforge/dsp.hpp"
#include "vibraforge/errors.hpp"
#include "vibraforge/fidelity.hpp"
#include "vibraforge/ladder.hpp"
#include "vibraforge/pattern.hpp"
#include "vibraforge/power.hpp"
#include "vibraforge/protocol.hpp"
#include "vibraforge/reports.hpp"
#include "vibraforge/scheduler.hpp"
#include "vibraforge/segmentation.hpp"
#include "vibraforge/service.hpp"
#include "vibraforge/simulator.hpp"
#include "vibraforge/topology.hpp"
#include "vibraforge/waveform.hpp"
