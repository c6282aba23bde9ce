#pragma once

#include "predictimand/error.hpp"
#include "predictimand/format.hpp"
#include "predictimand/dataset.hpp"
#include "predictimand/csv.hpp"
#include "predictimand/curves.hpp"
#include "predictimand/cox.hpp"
#include "predictimand/competing.hpp"
#include "predictimand/weights.hpp"
#include "predictimand/predictimands.hpp"
#include "predictimand/simulator.hpp"
#include "predictimand/validation.hpp"
#include "predictimand/scenario.hpp"
#include "predictimand/io.hpp"
