"""Command-line tools: platform server, researcher, ethics board, loadgen.

Each tool exits nonzero with the wire error code on any protocol
failure, so scripted runs can branch on the exact failure class.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from peqes import crypto
from peqes.canonical import from_hex
from peqes.clients import (
    AttestationFailed,
    BoardClient,
    ClientError,
    ParticipantClient,
    ResearcherClient,
    TrustAnchor,
    load_keypair,
    save_keypair,
)
from peqes.errors import ProtocolError
from peqes.study import StudySpec


def _fail(code: str, detail: str = "") -> None:
    click.echo(code, err=False)
    if detail:
        click.echo(detail, err=True)
    sys.exit(1)


def _run(fn):
    try:
        return fn()
    except (ClientError, AttestationFailed) as exc:
        _fail(exc.code, exc.detail)
    except ProtocolError as exc:
        _fail(exc.code, exc.detail)


def _load_config(config_path: str | None) -> dict:
    if config_path:
        return json.loads(Path(config_path).read_text())
    return {}


def _url(config: dict, url: str | None) -> str:
    value = url or config.get("url")
    if not value:
        raise click.UsageError("provide --url or a config file with a 'url' entry")
    return value


# --------------------------------------------------------------------------
# peqes-server
# --------------------------------------------------------------------------


@click.command()
@click.option("--listen", default="127.0.0.1:8000", show_default=True, help="host:port to bind")
@click.option("--data-dir", required=True, type=click.Path(path_type=Path))
@click.option("--backend", default="sim", show_default=True, type=click.Choice(["sim"]))
@click.option(
    "--measurement-file",
    type=click.Path(exists=True, path_type=Path),
    help="trusted-core build artifact; its hash is the published measurement",
)
@click.option(
    "--backend-config",
    type=click.Path(path_type=Path),
    help="simulated backend config (created on first run if absent)",
)
@click.option("--board-pk", default=None, help="pinned ethics-board public key (hex)")
@click.option("--webapp-dir", type=click.Path(path_type=Path), default=None)
def server(listen, data_dir, backend, measurement_file, backend_config, board_pk, webapp_dir):
    """Run the platform service."""
    import os

    import uvicorn

    from peqes.enclave import SimBackendConfig, SimEnclave, measure
    from peqes.protocol import TrustedCore
    from peqes.service import create_app

    data_dir.mkdir(parents=True, exist_ok=True)
    artifact = measurement_file.read_bytes() if measurement_file else b"peqes-dev-artifact"
    measurement = measure(artifact)

    config_path = backend_config or (data_dir / "backend-sim.json")
    if config_path.exists():
        config = SimBackendConfig.from_file(config_path)
        if config.measurement.digest != measurement.digest:
            config = SimBackendConfig(
                device_secret=config.device_secret,
                manufacturer_secret=config.manufacturer_secret,
                measurement=measurement,
            )
            config.to_file(config_path)
    else:
        config = SimBackendConfig.generate(measurement)
        device_secret_env = os.environ.get("PEQES_DEVICE_SECRET")
        if device_secret_env:
            config = SimBackendConfig(
                device_secret=from_hex(device_secret_env),
                manufacturer_secret=config.manufacturer_secret,
                measurement=measurement,
            )
        config.to_file(config_path)

    core = TrustedCore(
        SimEnclave(config),
        data_dir,
        board_public=from_hex(board_pk) if board_pk else None,
    )
    app = create_app(core, webapp_dir=webapp_dir, meta_log_path=data_dir / "meta.log")
    host, _, port = listen.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")


# --------------------------------------------------------------------------
# peqes-researcher
# --------------------------------------------------------------------------


@click.group()
def researcher():
    """Researcher-side operations."""


@researcher.command()
@click.option("--out", required=True, type=click.Path(path_type=Path))
def keygen(out):
    save_keypair(out, crypto.generate_signing_keypair())
    click.echo(f"wrote {out}")


@researcher.command("sign-spec")
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--key", "key_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
def sign_spec(spec_path, key_path, out):
    """Fill in the researcher key and sign a draft study spec."""
    pair = load_keypair(key_path)
    draft = json.loads(spec_path.read_text())
    draft["researcher_public"] = pair.public.hex()
    draft.setdefault("suite_id", crypto.SUITE_ID)
    spec = StudySpec.from_dict(draft)
    spec.validate()
    signature = crypto.sign(pair.secret, spec.canonical_bytes()).hex()
    out.write_text(json.dumps({"spec": spec.to_dict(), "signature": signature}, indent=2))
    click.echo(f"wrote {out}")


@researcher.command()
@click.option("--url", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--bundle", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--key", "key_path", required=True, type=click.Path(exists=True, path_type=Path))
def submit(url, config_path, bundle, key_path):
    """Register a signed study with the platform."""
    config = _load_config(config_path)
    data = json.loads(Path(bundle).read_text())
    client = ResearcherClient(_url(config, url), load_keypair(key_path))

    def go():
        reply = client.post("/api/studies", data)
        click.echo(json.dumps({"study_id": reply["study_id"], "study_pk": reply["study_pk"]}))

    _run(go)


@researcher.command("open")
@click.option("--url", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--study-id", required=True)
@click.option("--key", "key_path", required=True, type=click.Path(exists=True, path_type=Path))
def open_cmd(url, config_path, study_id, key_path):
    config = _load_config(config_path)
    client = ResearcherClient(_url(config, url), load_keypair(key_path))
    reply = _run(lambda: client.open(study_id))
    click.echo(json.dumps(reply))


@researcher.command()
@click.option("--url", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--study-id", required=True)
@click.option("--key", "key_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option("--out", type=click.Path(path_type=Path), default=None, help="outputs file")
def complete(url, config_path, study_id, key_path, out):
    config = _load_config(config_path)
    client = ResearcherClient(_url(config, url), load_keypair(key_path))
    reply = _run(lambda: client.complete(study_id))
    text = json.dumps(reply, indent=2)
    if out:
        out.write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


# --------------------------------------------------------------------------
# peqes-board
# --------------------------------------------------------------------------


@click.group()
def board():
    """Ethics-board operations."""


@board.command("keygen")
@click.option("--out", required=True, type=click.Path(path_type=Path))
def board_keygen(out):
    save_keypair(out, crypto.generate_signing_keypair())
    click.echo(f"wrote {out}")


@board.command()
@click.option("--url", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(path_type=Path))
def pin(url, config_path, out):
    """Fetch the published measurement and write a local trust anchor.

    Convenience only: the endpoint is untrusted, so verify the anchor
    out-of-band before approving anything against it.
    """
    config = _load_config(config_path)
    client = ParticipantClient(_url(config, url))
    info = _run(lambda: client.get("/api/measurement"))
    out.write_text(
        json.dumps(
            {"measurement": info["measurement"], "backend_root_pk": info["backend_root_pk"]},
            indent=2,
        )
    )
    click.echo(f"wrote {out} (verify out-of-band before use)")


@board.command()
@click.option("--url", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--study-id", required=True)
@click.option("--key", "key_path", required=True, type=click.Path(exists=True, path_type=Path))
@click.option(
    "--trust-anchor",
    "anchor_path",
    required=True,
    type=click.Path(exists=True, path_type=Path),
    help="locally pinned measurement + backend root key",
)
def approve(url, config_path, study_id, key_path, anchor_path):
    """Attest the trusted core and sign the study approval."""
    config = _load_config(config_path)
    client = BoardClient(
        _url(config, url), load_keypair(key_path), TrustAnchor.from_file(anchor_path)
    )
    reply = _run(lambda: client.approve(study_id))
    click.echo(json.dumps(reply))


# --------------------------------------------------------------------------
# peqes-loadgen
# --------------------------------------------------------------------------


@click.group()
def loadgen():
    """Synthetic participant workload."""


@loadgen.command("run")
@click.option("--url", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--study-id", required=True)
@click.option("-n", "count", default=100, show_default=True)
@click.option("--seed", default=None, type=int)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--board-pk", default=None, help="verify the study offer under this key first")
def loadgen_run(url, config_path, study_id, count, seed, out, board_pk):
    from peqes.loadgen import run_loadgen, write_csv

    config = _load_config(config_path)
    client = ParticipantClient(
        _url(config, url), board_public=from_hex(board_pk) if board_pk else None
    )

    def go():
        result = run_loadgen(client, study_id, count, seed=seed, verify=board_pk is not None)
        write_csv(result, out)
        summary = result.summary
        click.echo(
            f"n={summary['n']} mean={summary['mean_ms']:.1f}ms "
            f"p50={summary['p50_ms']:.1f}ms p99={summary['p99_ms']:.1f}ms -> {out}"
        )

    _run(go)


@loadgen.command("verify-offer")
@click.option("--url", default=None)
@click.option("--config", "config_path", default=None, type=click.Path(exists=True))
@click.option("--study-id", required=True)
@click.option("--board-pk", required=True, help="pinned ethics-board public key (hex)")
def verify_offer_cmd(url, config_path, study_id, board_pk):
    """Participant-equivalent offer verification; exits nonzero on failure."""
    config = _load_config(config_path)
    client = ParticipantClient(_url(config, url), board_public=from_hex(board_pk))

    def go():
        offer = client.fetch_offer(study_id)
        if not client.verify_offer(offer):
            _fail("SIGNATURE_INVALID", "study offer failed approval verification")
        click.echo("offer verified")

    _run(go)


if __name__ == "__main__":
    # `python -m peqes.cli <tool> ...` for environments without entry points
    tools = {"server": server, "researcher": researcher, "board": board, "loadgen": loadgen}
    if len(sys.argv) > 1 and sys.argv[1] in tools:
        tool = tools[sys.argv.pop(1)]
        tool(prog_name=f"peqes-{sys.argv[0]}")
    else:
        click.echo("usage: python -m peqes.cli {server|researcher|board|loadgen} ...", err=True)
        sys.exit(2)
