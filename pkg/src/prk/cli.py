"""Command-line entry points: serve, ingest, query, keygen, bench.

Set PRK_TEST_SEED to fix all randomness (noise draws, key generation, blinding)
for reproducible golden runs.
"""

from __future__ import annotations

import json
import os
import random
import sys

import click
import numpy as np
from gmpy2 import mpz

from . import bench as bench_mod
from . import paillier
from .geometry import SphereParams
from .perturb import PrivacyBudget
from .protocol import ClientConfig, Cloud, CloudServer, ServiceMode, TcpTransport, run_session
from .store import VectorStore

SEED_ENV = "PRK_TEST_SEED"


def _seeded_rngs() -> tuple[np.random.Generator, random.Random | None]:
    seed = os.environ.get(SEED_ENV)
    if seed is not None:
        value = int(seed)
        return np.random.default_rng(value), random.Random(value)
    return np.random.default_rng(), None


def _load_store(path: str) -> VectorStore:
    with open(path, "rb") as fp:
        magic = fp.read(4)
        fp.seek(0)
        if magic == b"PRVS":
            return VectorStore.from_binary(fp)
        return VectorStore.from_jsonl(fp)


def _save_keypair(path: str, keypair: paillier.HEKeyPair, keybits: int) -> None:
    with open(path, "w") as fp:
        json.dump(
            {
                "keybits": keybits,
                "modulus": hex(keypair.public.modulus),
                "lambda": hex(keypair.secret.lam),
                "mu": hex(keypair.secret.mu),
                # prime factors keep the fast CRT decryption path after reload
                "p": hex(keypair.secret.p),
                "q": hex(keypair.secret.q),
            },
            fp,
        )
        fp.write("\n")


def _load_keypair(path: str) -> paillier.HEKeyPair:
    with open(path) as fp:
        data = json.load(fp)
    factors = {}
    if "p" in data and "q" in data:
        factors = {"p": mpz(int(data["p"], 16)), "q": mpz(int(data["q"], 16))}
    return paillier.HEKeyPair(
        paillier.PaillierPublicKey(mpz(int(data["modulus"], 16))),
        paillier.PaillierSecretKey(
            mpz(int(data["lambda"], 16)), mpz(int(data["mu"], 16)), **factors
        ),
    )


def _parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    if not host or not port.isdigit():
        raise click.BadParameter(f"expected HOST:PORT, got {addr!r}")
    return host, int(port)


@click.group()
def main():
    """Privacy-preserving nearest-neighbor retrieval toolkit."""


@main.command()
@click.option("--bits", "bits", type=click.Choice(["1024", "2048", "3072"]), default="2048")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def keygen(bits: str, out_path: str):
    """Generate an encryption keypair and write it to a file."""
    _, crypto_rng = _seeded_rngs()
    keybits = int(bits)
    keypair = paillier.keygen(keybits, crypto_rng, test_mode=crypto_rng is not None)
    _save_keypair(out_path, keypair, keybits)
    click.echo(f"wrote {keybits}-bit keypair to {out_path}")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--format", "fmt", type=click.Choice(["jsonl", "bin"]), default="bin")
def ingest(in_path: str, out_path: str, fmt: str):
    """Normalize and validate a corpus file, writing a store file."""
    store = _load_store(in_path)
    if fmt == "bin":
        with open(out_path, "wb") as fp:
            store.to_binary(fp)
    else:
        with open(out_path, "w") as fp:
            store.to_jsonl(fp)
    click.echo(f"ingested {len(store)} records (dim {store.dim}) into {out_path}")


@main.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--listen", "listen", default="127.0.0.1:7155")
def serve(store_path: str, listen: str):
    """Serve a store over the framed wire protocol."""
    store = _load_store(store_path)
    _, crypto_rng = _seeded_rngs()
    cloud = Cloud(store, crypto_rng=crypto_rng)
    server = CloudServer(_parse_addr(listen), cloud)
    click.echo(f"serving {len(store)} documents on {listen}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


@main.command()
@click.option("--addr", required=True)
@click.option("--embedding", "embedding_path", required=True, type=click.Path(exists=True))
@click.option("--k", type=int, required=True)
@click.option("--epsilon", type=float, default=None)
@click.option("--k-prime", "k_prime", type=int, default=None)
@click.option(
    "--mode", type=click.Choice([m.value for m in ServiceMode]), default="standard"
)
@click.option("--corpus-size", "corpus_size", type=int, required=True,
              help="Server corpus size N; needed for range calibration.")
@click.option("--key", "key_path", type=click.Path(exists=True), default=None,
              help="Keypair file from 'prk keygen'; generated ad hoc when omitted.")
@click.option("--report-costs", is_flag=True)
def query(addr, embedding_path, k, epsilon, k_prime, mode, corpus_size, key_path, report_costs):
    """Run one private retrieval against a server and print the documents."""
    with open(embedding_path) as fp:
        text = fp.read()
    try:
        values = json.loads(text)
    except json.JSONDecodeError:
        values = [float(tok) for tok in text.split()]
    query_vec = np.asarray(values, dtype=np.float64)
    query_vec /= np.linalg.norm(query_vec)

    rng, crypto_rng = _seeded_rngs()
    service_mode = ServiceMode(mode)
    if service_mode is ServiceMode.STANDARD and epsilon is None and k_prime is None:
        raise click.UsageError("standard mode needs --epsilon or --k-prime")

    keypair = None
    if service_mode is not ServiceMode.PRIVACY_IGNORANT:
        keypair = _load_keypair(key_path) if key_path else paillier.keygen(2048, crypto_rng)

    config = ClientConfig(
        sphere=SphereParams(query_vec.size, corpus_size),
        k=k,
        mode=service_mode,
        budget=PrivacyBudget(epsilon) if epsilon is not None else None,
        k_prime_target=k_prime,
        keypair=keypair,
    )
    transport = TcpTransport(*_parse_addr(addr))
    try:
        docs, report, session = run_session(query_vec, config, transport, rng, crypto_rng)
    finally:
        transport.close()

    for doc in docs:
        click.echo(doc.decode("utf-8", errors="replace"))
    if report_costs:
        click.echo("--- costs ---", err=True)
        click.echo(f"route: {session.plan.route.value if session.plan.route else '-'}", err=True)
        click.echo(f"rounds: {report.rounds}", err=True)
        click.echo(f"number units: {report.beta_units}", err=True)
        click.echo(f"document units: {report.eta_units}", err=True)
        for phase, nbytes in report.bytes_by_phase.items():
            click.echo(f"bytes[{phase}]: {nbytes}", err=True)


@main.group()
def bench():
    """Experiment harness emitting CSV."""


def _read_config(path: str) -> tuple[bench_mod.ExperimentConfig, dict[str, str]]:
    raw: dict[str, str] = {}
    with open(path) as fp:
        for line in fp:
            line = line.split("#", 1)[0].strip()
            if line and "=" in line:
                key, val = (part.strip() for part in line.split("=", 1))
                raw[key] = val
    return bench_mod.ExperimentConfig.from_file(path), raw


@bench.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def recall(config_path: str, out_path: str):
    """Recall of full protocol sessions over random queries."""
    config, _ = _read_config(config_path)
    result = bench_mod.recall_experiment(config)
    with open(out_path, "w") as fp:
        fp.write("trial,recall\n")
        for i, r in enumerate(result.per_trial):
            fp.write(f"{i},{r:.6f}\n")
    click.echo(
        f"mean recall {result.mean:.4f}, "
        f"full-recall fraction {result.full_recall_fraction:.4f}"
    )


@bench.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def curves(config_path: str, out_path: str):
    """Hyperparameter curves; config key 'kind' picks the curve."""
    config, raw = _read_config(config_path)
    kind = raw.get("kind", "gamma_pdf")
    with open(out_path, "w") as fp:
        fp.write(bench_mod.emit_curves(kind, config))
    click.echo(f"wrote {kind} curve to {out_path}")


@bench.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def pipeline(config_path: str, out_path: str):
    """Per-phase cost trends over a k' grid (config key 'grid')."""
    config, raw = _read_config(config_path)
    grid = tuple(int(v) for v in raw.get("grid", "40,80,160,320").split(","))
    keybits = int(raw.get("keybits", "2048"))
    with open(out_path, "w") as fp:
        fp.write(bench_mod.bench_pipeline(config, grid, keybits))
    click.echo(f"wrote pipeline costs over k' {grid} to {out_path}")


if __name__ == "__main__":
    sys.exit(main())
