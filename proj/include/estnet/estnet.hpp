#pragma once

#include "graph.hpp"
#include "graph_io.hpp"
#include "layout.hpp"
#include "layout_io.hpp"
#include "design.hpp"
#include "sets.hpp"
#include "trace.hpp"
#include "games.hpp"
#include "gne.hpp"
#include "optim.hpp"
#include "admm.hpp"
#include "abc.hpp"
#include "pushsum.hpp"
#include "coupled.hpp"
#include "scenarios.hpp"
