#pragma once

#include "fair_context/adapter_client.hpp"
#include "fair_context/conformal.hpp"
#include "fair_context/correlation_remover.hpp"
#include "fair_context/csv.hpp"
#include "fair_context/error.hpp"
#include "fair_context/experiment.hpp"
#include "fair_context/metrics.hpp"
#include "fair_context/pareto.hpp"
#include "fair_context/predictors.hpp"
#include "fair_context/random.hpp"
#include "fair_context/report.hpp"
#include "fair_context/selection.hpp"
#include "fair_context/tabular.hpp"
