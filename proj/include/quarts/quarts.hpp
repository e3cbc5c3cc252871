#pragma once

// Umbrella header: quantile regression with autoregressive residuals,
// regularization and lag selection, uncertainty quantification, and the
// reconstruction pipeline built on them.

#include "quarts/ar.hpp"
#include "quarts/bootstrap.hpp"
#include "quarts/cross_validation.hpp"
#include "quarts/csv_io.hpp"
#include "quarts/diagnostics.hpp"
#include "quarts/gls.hpp"
#include "quarts/innovation.hpp"
#include "quarts/panel.hpp"
#include "quarts/parallel.hpp"
#include "quarts/pca.hpp"
#include "quarts/qr_solver.hpp"
#include "quarts/quarts_fit.hpp"
#include "quarts/rarld.hpp"
#include "quarts/reconstruct.hpp"
#include "quarts/rng.hpp"
#include "quarts/special.hpp"
#include "quarts/spline.hpp"
#include "quarts/types.hpp"
#include "quarts/version.hpp"
