// Copyright 2026 The shsteer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include "shsteer/common.hpp"
#include "shsteer/config.hpp"
#include "shsteer/design.hpp"
#include "shsteer/driver_model.hpp"
#include "shsteer/experiment.hpp"
#include "shsteer/guidance.hpp"
#include "shsteer/metrics.hpp"
#include "shsteer/rng.hpp"
#include "shsteer/semg.hpp"
#include "shsteer/sim_config.hpp"
#include "shsteer/sim_engine.hpp"
#include "shsteer/stats.hpp"
#include "shsteer/steering_column.hpp"
#include "shsteer/track.hpp"
#include "shsteer/trial_log.hpp"
#include "shsteer/vehicle.hpp"
#include "shsteer/teleop/protocol.hpp"
#include "shsteer/teleop/session.hpp"

// The WebSocket server pulls in Boost.Asio; include
// "shsteer/teleop/server.hpp" directly when it is needed.
