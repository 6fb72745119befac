#!/usr/bin/env python3
"""Flask app exposing the fibersphere model, simulator and tomography as JSON APIs."""

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

# Add parent directory to path so we can import fibersphere
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
from dotenv import load_dotenv
from flask import Flask, jsonify, request
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from fibersphere import __version__
from fibersphere.system.coupled_mode import (
    coupling_regime,
    linewidth_hz,
    minimum_transmittance,
    quality_factor,
    transmittance_spectrum,
)
from fibersphere.system.errors import CountOverflowError, SpectrumPointError
from fibersphere.system.logging_config import setup_logging
from fibersphere.system.photon_sim.detector import DetectorModel
from fibersphere.system.pipeline import simulate_from_config
from fibersphere.system.polarization import BASES
from fibersphere.system.run_config import CavitySection, DetectorSection, RunConfig, SweepSection, TomographySection
from fibersphere.system.tomography import mle_reconstruct, purity
from fibersphere.system.workers import env_int

flask_logger = logging.getLogger('FlaskApp')

# Load environment variables
load_dotenv()

# Initialize logging
setup_logging()

app = Flask(__name__)


# Largest detuning grid or sweep accepted per request
MAX_POINTS = env_int('FIBERSPHERE_API_MAX_POINTS', 2001, 2)


class TransmissionRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cavity: CavitySection
    detunings_hz: Optional[List[float]] = None
    sweep: Optional[SweepSection] = None
    unwrap: bool = False


class TomographyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    counts: List[float] = Field(..., min_length=6, max_length=6, description="Counts ordered X, Y, P, M, R, L")
    bins: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    detector: DetectorSection = Field(default_factory=DetectorSection)
    tomography: TomographySection = Field(default_factory=TomographySection)


def _error(message: str, status: int, details: Any = None):
    body: Dict[str, Any] = {'status': 'error', 'error': message}
    if details is not None:
        body['details'] = details
    return jsonify(body), status


def _json_body() -> Optional[Dict[str, Any]]:
    data = request.get_json(silent=True)
    return data if isinstance(data, dict) else None


def _validation_details(exc: ValidationError) -> List[Dict[str, Any]]:
    return [{'loc': list(e.get('loc', ())), 'msg': e.get('msg', '')} for e in exc.errors()]


@app.route('/api/health', methods=['GET'])
def health_check():
    """Health check endpoint."""
    return jsonify({
        'status': 'ok',
        'service': 'fibersphere',
        'version': __version__,
        'max_points': MAX_POINTS,
    })


@app.route('/api/transmission', methods=['POST'])
def compute_transmission():
    """Evaluate the coupled-mode transmission on a detuning grid.

    Body (JSON):
        cavity (object, required): Cavity parameters (gamma, rho_l, kappa, ...).
        detunings_hz (list, optional): Explicit detuning grid.
        sweep (object, optional): center_hz, span_hz, points; used when detunings_hz is absent.
    """
    data = _json_body()
    if data is None:
        return _error('Request body must be a JSON object', 400)
    try:
        req = TransmissionRequest.model_validate(data)
        if req.cavity.kappa is None:
            return _error('cavity.kappa is required', 400)
        if req.detunings_hz is not None:
            detunings = np.asarray(req.detunings_hz, dtype=float)
        elif req.sweep is not None:
            detunings = req.sweep.detunings()
        else:
            return _error('detunings_hz or sweep is required', 400)
        if detunings.size == 0 or detunings.size > MAX_POINTS:
            return _error(f'between 1 and {MAX_POINTS} detunings are allowed', 400)

        config = RunConfig.model_validate({'cavity': req.cavity.model_dump()})
        params = config.cavity_params()
        points = transmittance_spectrum(params, detunings, unwrap=req.unwrap)
        width = linewidth_hz(params)
        return jsonify({
            'status': 'ok',
            'params': params.to_dict(),
            'regime': coupling_regime(params).value,
            'T_min': minimum_transmittance(params),
            'fwhm_hz': width,
            'Q': quality_factor(params.f_res_hz, width),
            'detunings_hz': detunings.tolist(),
            'points': [p.to_dict() for p in points],
        })
    except ValidationError as e:
        return _error('Invalid request', 400, _validation_details(e))
    except SpectrumPointError as e:
        return _error(str(e), 422, {'index': e.index, 'detuning_hz': e.detuning_hz})
    except ValueError as e:
        return _error(str(e), 400)
    except Exception as e:
        flask_logger.error("Error computing transmission: %s", e, exc_info=True)
        return _error(str(e), 500)


@app.route('/api/simulate', methods=['POST'])
def simulate():
    """Simulate a six-projection sweep from a run config (JSON body)."""
    data = _json_body()
    if data is None:
        return _error('Request body must be a JSON object', 400)
    try:
        config = RunConfig.model_validate(data)
        if config.sweep is None:
            return _error('sweep is required', 400)
        if config.sweep.points > MAX_POINTS:
            return _error(f'at most {MAX_POINTS} sweep points are allowed', 400)
        record = simulate_from_config(config)
        flask_logger.info("Simulated %d-point sweep for %s (seed %d)", len(record), config.name, config.seed)
        return jsonify({
            'status': 'ok',
            'config_sha256': config.digest(),
            'columns': list(BASES),
            'detunings_hz': record.detunings_hz.tolist(),
            'counts': record.counts.tolist(),
            'record': record.meta(),
        })
    except ValidationError as e:
        return _error('Invalid config', 400, _validation_details(e))
    except CountOverflowError as e:
        return _error(str(e), 422)
    except ValueError as e:
        return _error(str(e), 400)
    except Exception as e:
        flask_logger.error("Error simulating sweep: %s", e, exc_info=True)
        return _error(str(e), 500)


@app.route('/api/tomography', methods=['POST'])
def tomography():
    """Maximum-likelihood density matrix for one set of six projection counts.

    Body (JSON):
        counts (list of 6, required): Counts ordered X, Y, P, M, R, L.
        bins (int, optional): Number of pooled counting bins (scales dark counts).
        detector, tomography (objects, optional): Detector and optimizer settings.
    """
    data = _json_body()
    if data is None:
        return _error('Request body must be a JSON object', 400)
    try:
        req = TomographyRequest.model_validate(data)
        detector = DetectorModel(bin_time_s=req.detector.bin_time_s, dark_rate_hz=req.detector.dark_rate_hz)
        result = mle_reconstruct(req.counts, detector, req.tomography.to_domain(req.seed), bins=req.bins)
        return jsonify({
            'status': 'ok',
            'purity': purity(result.rho),
            'bloch': list(result.bloch),
            **result.to_dict(),
        })
    except ValidationError as e:
        return _error('Invalid request', 400, _validation_details(e))
    except ValueError as e:
        return _error(str(e), 400)
    except Exception as e:
        flask_logger.error("Error reconstructing state: %s", e, exc_info=True)
        return _error(str(e), 500)


if __name__ == '__main__':
    debug = os.getenv('FLASK_DEBUG', '0') == '1'
    port = int(os.getenv('PORT', '5050'))
    host = os.getenv('HOST', '0.0.0.0')

    bind_host = host if host not in ('0.0.0.0', '::') else 'localhost'
    print(f"fibersphere API health: http://{bind_host}:{port}/api/health")

    app.run(debug=debug, host=host, port=port, threaded=True)
