"""
Command-Line Interface for Holoflow

Subcommands wire parsing, priors, coupling, training, generation and
evaluation into reproducible runs. Every subcommand that writes files also
writes a run manifest into its output directory; `holoflow replay` re-runs it.
"""

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from holoflow import __version__
from holoflow.config import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_EPOCHS,
    DEFAULT_ETA,
    DEFAULT_HIDDEN_WIDTH,
    DEFAULT_LEARNING_RATE,
    DEFAULT_SIGMA,
    DEFAULT_STEPS,
    LAMBDA_B,
    LAMBDA_X,
    RMSD_MAX,
    RUN_MANIFEST_NAME,
    STRUCTURE_LOSS_CLAMP,
    STRUCTURE_LOSSES,
    SUCCESS_RMSD_THRESHOLD,
    TM_MIN,
    TOP_K,
    TRAJECTORY_SUFFIX,
)
from holoflow.coupling import CouplingCriteria, filter_manifest
from holoflow.errors import HoloflowError
from holoflow.evaluation import evaluate_manifest
from holoflow.fieldnet import FieldNetwork, TrainConfig, init_field, load_params, save_params
from holoflow.flow import FlowConfig
from holoflow.geometry import pocket_weighted_align, superposed_rmsd, tm_score
from holoflow.molgraph import parse_smiles
from holoflow.pipeline import generate, ligand_elements, load_training_manifest, train
from holoflow.priors import PriorConfig, assemble_prior
from holoflow.structures import (
    read_pdb,
    structure_from_state,
    trajectory_snapshots,
    write_pdb,
    write_trajectory,
)

logger = logging.getLogger(__name__)


class UsageError(Exception):
    """Raised by the argument parser instead of exiting with status 2."""

    def __init__(self, message: str, usage: str):
        self.usage = usage
        super().__init__(message)


class HoloflowArgumentParser(argparse.ArgumentParser):
    """Argument parser that reports usage errors as exit status 1."""

    def error(self, message):
        raise UsageError(message, self.format_usage())


@dataclass
class RunManifest:
    """
    Record of one CLI run.

    Attributes:
        subcommand: Subcommand name
        argv: Arguments the run was started with (replayable)
        config: Resolved configuration values
        seed: Root seed, if the subcommand uses randomness
        inputs: Input file paths
        outputs: Output file paths
        version: holoflow version
    """
    subcommand: str
    argv: List[str]
    config: Dict[str, object] = field(default_factory=dict)
    seed: Optional[int] = None
    inputs: List[str] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    version: str = __version__

    def write(self, out_dir: Path) -> Path:
        path = out_dir / RUN_MANIFEST_NAME
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def build_parser() -> argparse.ArgumentParser:
    """Argument parser for every subcommand."""
    common = HoloflowArgumentParser(add_help=False)
    common.add_argument(
        '-v', '--verbose',
        action='store_true',
        help='Log debug detail and show tracebacks'
    )

    parser = HoloflowArgumentParser(
        prog='holoflow',
        description='Holoflow: conditional flow matching for protein-ligand complexes',
        epilog='Examples:\n'
               '  holoflow parse --smiles "c1ccccc1"\n'
               '  holoflow couple --manifest pairs.csv --tm-min 0.7 --rmsd-max 5.0 --out coupled\n'
               '  holoflow train --manifest train.csv --epochs 100 --out model\n'
               '  holoflow generate --protein apo.pdb --smiles "CCO" --checkpoint model/field.ckpt '
               '--seed 7 --samples 8 --out run\n'
               '  holoflow evaluate --manifest predictions.csv --out report\n',
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument('--version', action='version', version=f'holoflow {__version__}')
    subparsers = parser.add_subparsers(dest='command', parser_class=HoloflowArgumentParser)

    # Parse command
    parse_parser = subparsers.add_parser(
        'parse', parents=[common],
        help='Summarize a SMILES string',
        description='Parse a SMILES string into a heavy-atom graph and print a summary'
    )
    source = parse_parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--smiles', help='SMILES string')
    source.add_argument('--smiles-file', help='Text file with one SMILES string per line')
    parse_parser.add_argument('--out', help='Also write the summary as JSON into this directory')

    # Prior command
    prior_parser = subparsers.add_parser(
        'prior', parents=[common],
        help='Draw one prior sample',
        description='Sample a t = 0 complex from the noised template and the harmonic ligand prior'
    )
    prior_parser.add_argument('--protein', required=True, help='Template protein PDB file')
    prior_parser.add_argument('--smiles', required=True, help='Ligand SMILES')
    _add_prior_flags(prior_parser)
    prior_parser.add_argument('--out', required=True, help='Output directory')

    # Couple command
    couple_parser = subparsers.add_parser(
        'couple', parents=[common],
        help='Filter apo/holo pairs',
        description='Accept apo/holo pairs by Cα TM-score and RMSD'
    )
    couple_parser.add_argument('--manifest', required=True, help='CSV with columns id,apo_path,holo_path')
    couple_parser.add_argument('--tm-min', type=float, default=TM_MIN,
                               help=f'Minimum TM-score (default: {TM_MIN})')
    couple_parser.add_argument('--rmsd-max', type=float, default=RMSD_MAX,
                               help=f'RMSD ceiling in Å, exclusive (default: {RMSD_MAX})')
    couple_parser.add_argument('--min-residues', type=int, help='Minimum residue count')
    couple_parser.add_argument('--max-residues', type=int, help='Maximum residue count')
    couple_parser.add_argument('--jobs', type=int, default=1, help='Worker threads (default: 1)')
    couple_parser.add_argument('--out', required=True, help='Output directory')

    # Train command
    train_parser = subparsers.add_parser(
        'train', parents=[common],
        help='Train the field network',
        description='Fit the endpoint predictor on a manifest of coupled pairs'
    )
    train_parser.add_argument('--manifest', required=True,
                              help='CSV with columns id,apo_path,holo_path,smiles[,affinity]')
    train_parser.add_argument('--epochs', type=int, default=DEFAULT_EPOCHS,
                              help=f'Epochs (default: {DEFAULT_EPOCHS})')
    train_parser.add_argument('--lr', type=float, default=DEFAULT_LEARNING_RATE,
                              help=f'Learning rate (default: {DEFAULT_LEARNING_RATE})')
    train_parser.add_argument('--batch-size', type=int, default=DEFAULT_BATCH_SIZE,
                              help=f'Draws per row per update (default: {DEFAULT_BATCH_SIZE})')
    train_parser.add_argument('--width', type=int, default=DEFAULT_HIDDEN_WIDTH,
                              help=f'Hidden width (default: {DEFAULT_HIDDEN_WIDTH})')
    train_parser.add_argument('--lambda-x', type=float, default=LAMBDA_X,
                              help=f'Structure loss weight (default: {LAMBDA_X})')
    train_parser.add_argument('--lambda-b', type=float, default=LAMBDA_B,
                              help=f'Affinity loss weight (default: {LAMBDA_B})')
    train_parser.add_argument('--structure-loss', choices=STRUCTURE_LOSSES, default=STRUCTURE_LOSSES[0],
                              help='Structure loss (default: aligned-mse)')
    train_parser.add_argument('--clamp', type=float, default=STRUCTURE_LOSS_CLAMP,
                              help=f'Per-atom clamp of the clamped loss in Å (default: {STRUCTURE_LOSS_CLAMP})')
    train_parser.add_argument('--affinity-start-epoch', type=int, default=0,
                              help='First epoch with the affinity loss on (default: 0)')
    train_parser.add_argument('--init', help='Start from this checkpoint instead of a fresh network')
    _add_prior_flags(train_parser)
    train_parser.add_argument('--out', required=True, help='Output directory')

    # Generate command
    generate_parser = subparsers.add_parser(
        'generate', parents=[common],
        help='Generate ranked complexes',
        description='Integrate prior samples to complexes and rank them by confidence'
    )
    generate_parser.add_argument('--protein', required=True, help='Template protein PDB file')
    generate_parser.add_argument('--smiles', required=True, help='Ligand SMILES')
    generate_parser.add_argument('--checkpoint', help='Trained field checkpoint (default: untrained network)')
    generate_parser.add_argument('--width', type=int, default=DEFAULT_HIDDEN_WIDTH,
                                 help='Hidden width of the untrained network')
    generate_parser.add_argument('--steps', type=int, default=DEFAULT_STEPS,
                                 help=f'Integration steps (default: {DEFAULT_STEPS})')
    generate_parser.add_argument('--eta', type=float, default=DEFAULT_ETA,
                                 help=f'Step scale (default: {DEFAULT_ETA})')
    generate_parser.add_argument('--no-align', action='store_true', help='Disable per-step superposition')
    generate_parser.add_argument('--align-protein-only', action='store_true',
                                 help='Fit per-step superposition on protein atoms only')
    generate_parser.add_argument('--samples', type=int, default=1, help='Number of samples (default: 1)')
    generate_parser.add_argument('--jobs', type=int, default=1, help='Worker threads (default: 1)')
    generate_parser.add_argument('--snapshots', type=int, default=0,
                                 help='Write this many evenly spaced frames of each ranked sample as PDB')
    _add_prior_flags(generate_parser)
    generate_parser.add_argument('--out', required=True, help='Output directory')

    # Evaluate command
    evaluate_parser = subparsers.add_parser(
        'evaluate', parents=[common],
        help='Score predicted complexes',
        description='Symmetry-corrected ligand RMSD, success rate and affinity metrics'
    )
    evaluate_parser.add_argument(
        '--manifest', required=True,
        help='CSV with columns id,predicted_path,reference_path,smiles[,predicted_affinity,true_affinity]'
    )
    evaluate_parser.add_argument('--threshold', type=float, default=SUCCESS_RMSD_THRESHOLD,
                                 help=f'Success threshold in Å (default: {SUCCESS_RMSD_THRESHOLD})')
    evaluate_parser.add_argument('--out', required=True, help='Output directory')

    # Align command
    align_parser = subparsers.add_parser(
        'align', parents=[common],
        help='Pocket-weighted apo/holo superposition',
        description='Superpose an apo structure onto a holo complex, weighting residues near the ligand'
    )
    align_parser.add_argument('--apo', required=True, help='Apo PDB file')
    align_parser.add_argument('--holo', required=True, help='Holo PDB file with ligand HETATM records')
    align_parser.add_argument('--out', required=True, help='Output directory')

    # Score command
    score_parser = subparsers.add_parser(
        'score', parents=[common],
        help='Cα TM-score and RMSD of two structures',
        description='Print the Cα TM-score and superposed Cα RMSD of two residue-aligned structures'
    )
    score_parser.add_argument('--a', required=True, help='First PDB file')
    score_parser.add_argument('--b', required=True, help='Second PDB file')

    # Replay command
    replay_parser = subparsers.add_parser(
        'replay', parents=[common],
        help='Re-run a recorded run',
        description='Re-dispatch the arguments stored in a run manifest'
    )
    replay_parser.add_argument('--manifest', required=True, help=f'{RUN_MANIFEST_NAME} of a previous run')
    return parser


def _add_prior_flags(parser: argparse.ArgumentParser):
    parser.add_argument('--seed', type=int, default=0, help='Root random seed (default: 0)')
    parser.add_argument('--sigma', type=float, default=DEFAULT_SIGMA,
                        help=f'Template noise in Å (default: {DEFAULT_SIGMA})')
    parser.add_argument('--center', choices=['ca_centroid', 'origin'], default='ca_centroid',
                        help='Ligand prior centre (default: ca_centroid)')
    parser.add_argument('--protein-prior', choices=['template', 'harmonic'], default='template',
                        help='Protein prior (default: template)')


def _prior_config(args) -> PriorConfig:
    return PriorConfig(sigma=args.sigma, center_mode=args.center, protein_prior=args.protein_prior, seed=args.seed)


def _read_structure(path: str):
    return read_pdb(Path(path).read_text())


def _output_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ============================================================================
# Subcommands
# ============================================================================

def _print_summary(smiles: str, graph) -> dict:
    summary = graph.describe()
    print(f"✅ {smiles}: {summary['atoms']} atoms, {summary['bonds']} bonds, "
          f"{len(summary['fragments'])} fragment(s) of sizes {summary['fragments']}")
    print(f"   elements: {' '.join(summary['elements'])}")
    print(f"   degrees: {' '.join(str(d) for d in summary['degrees'])}")
    for warning in graph.warnings:
        print(f"⚠️  Warning: {warning}", file=sys.stderr)
    return summary


def _parse_smiles_file(path: str) -> Tuple[List[dict], int]:
    """Summaries of every non-empty line and the number of lines that failed."""
    summaries = []
    failures = 0
    for number, line in enumerate(Path(path).read_text().splitlines(), start=1):
        smiles = line.strip()
        if not smiles:
            continue
        try:
            graph = parse_smiles(smiles)
        except HoloflowError as e:
            print(f"❌ Error: line {number}: {e}", file=sys.stderr)
            failures += 1
            continue
        summaries.append({"line": number, "smiles": smiles, **_print_summary(smiles, graph)})
    return summaries, failures


def parse_command(args, argv: List[str]) -> int:
    if args.smiles_file:
        result, failures = _parse_smiles_file(args.smiles_file)
        config = {"smiles_file": args.smiles_file}
        inputs = [args.smiles_file]
        print(f"{'⚠️ ' if failures else '✅'} Parsed {len(result)} of {len(result) + failures} SMILES line(s)")
    else:
        result = _print_summary(args.smiles, parse_smiles(args.smiles))
        failures = 0
        config = {"smiles": args.smiles}
        inputs = []
    if args.out:
        out = _output_dir(args.out)
        path = out / "graph.json"
        path.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
        RunManifest("parse", argv, config=config, inputs=inputs, outputs=[str(path)]).write(out)
    return 1 if failures else 0


def prior_command(args, argv: List[str]) -> int:
    config = _prior_config(args)
    template = _read_structure(args.protein)
    graph = parse_smiles(args.smiles)
    state = assemble_prior(template, graph, config, np.random.default_rng(config.seed))
    out = _output_dir(args.out)
    path = out / "prior.pdb"
    path.write_text(write_pdb(structure_from_state(template, ligand_elements(graph), state)))
    RunManifest("prior", argv, config=config.to_dict(), seed=config.seed,
                inputs=[args.protein], outputs=[str(path)]).write(out)
    print(f"✅ Wrote prior sample to {path}")
    return 0


def couple_command(args, argv: List[str]) -> int:
    criteria = CouplingCriteria(tm_min=args.tm_min, rmsd_max=args.rmsd_max,
                                min_residues=args.min_residues, max_residues=args.max_residues)
    manifest_path = Path(args.manifest)
    manifest = pd.read_csv(manifest_path, dtype={"id": str})
    accepted, report = filter_manifest(manifest, criteria, base=manifest_path.parent, jobs=args.jobs)
    out = _output_dir(args.out)
    accepted_path = out / "accepted.csv"
    report_path = out / "coupling_report.csv"
    accepted.to_csv(accepted_path, index=False)
    report.to_csv(report_path, index=False)
    RunManifest("couple", argv, config=criteria.to_dict(), inputs=[args.manifest],
                outputs=[str(accepted_path), str(report_path)]).write(out)
    errored = int((report["error"] != "").sum()) if len(report) else 0
    print(f"✅ Accepted {len(accepted)} of {len(report)} pairs")
    if errored:
        print(f"⚠️  {errored} pair(s) could not be evaluated; see {report_path}")
    return 0


def train_command(args, argv: List[str]) -> int:
    config = TrainConfig(
        lambda_x=args.lambda_x, lambda_b=args.lambda_b, sigma=args.sigma, learning_rate=args.lr,
        epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
        structure_loss=args.structure_loss, clamp=args.clamp,
        affinity_start_epoch=args.affinity_start_epoch, hidden_width=args.width,
        protein_prior=args.protein_prior, center_mode=args.center,
    )
    manifest_path = Path(args.manifest)
    pairs = load_training_manifest(pd.read_csv(manifest_path, dtype={"id": str}), base=manifest_path.parent)
    params = load_params(args.init) if args.init else init_field(config.hidden_width, config.seed)
    result = train(params, pairs, config)
    out = _output_dir(args.out)
    checkpoint = out / "field.ckpt"
    curve = out / "loss_curve.csv"
    save_params(result.params, checkpoint)
    result.curve().to_csv(curve, index=False)
    inputs = [args.manifest] + ([args.init] if args.init else [])
    RunManifest("train", argv, config=config.to_dict(), seed=config.seed, inputs=inputs,
                outputs=[str(checkpoint), str(curve)]).write(out)
    if result.history:
        print(f"✅ Trained {len(result.history)} epochs: loss {result.history[0].total:.5f} "
              f"-> {result.history[-1].total:.5f}")
    else:
        print("✅ No epochs requested; wrote initial parameters")
    return 0


def generate_command(args, argv: List[str]) -> int:
    flow_config = FlowConfig(steps=args.steps, eta=args.eta, align_each_step=not args.no_align,
                             align_protein_only=args.align_protein_only)
    prior_config = _prior_config(args)
    if args.snapshots < 0:
        raise HoloflowError("--snapshots must be >= 0")
    template = _read_structure(args.protein)
    graph = parse_smiles(args.smiles)
    if args.checkpoint:
        params = load_params(args.checkpoint)
    else:
        print("⚠️  Warning: no --checkpoint given; sampling with an untrained network", file=sys.stderr)
        params = init_field(args.width, args.seed)
    ranked = generate(FieldNetwork(params), template, graph, flow_config, prior_config,
                      samples=args.samples, jobs=args.jobs)

    out = _output_dir(args.out)
    outputs = []
    rows = []
    for rank, sample in enumerate(ranked, start=1):
        trajectory_path = out / f"sample_{sample.index:03d}{TRAJECTORY_SUFFIX}"
        structure_path = out / f"rank_{rank}.pdb"
        trajectory_path.write_text(write_trajectory(sample.trajectory))
        structure_path.write_text(write_pdb(sample.structure))
        outputs += [str(trajectory_path), str(structure_path)]
        if args.snapshots:
            elements = ligand_elements(graph)
            for frame in trajectory_snapshots(sample.trajectory, args.snapshots):
                snapshot = out / f"rank_{rank}_step_{frame.step:03d}.pdb"
                snapshot.write_text(write_pdb(structure_from_state(template, elements, frame.state)))
                outputs.append(str(snapshot))
        rows.append({
            "rank": rank,
            "sample": sample.index,
            "confidence": sample.confidence,
            "affinity": sample.affinity,
            "structure_path": structure_path.name,
            "trajectory_path": trajectory_path.name,
        })
    ranked_path = out / "ranked.csv"
    pd.DataFrame(rows).to_csv(ranked_path, index=False)
    outputs.append(str(ranked_path))
    inputs = [args.protein] + ([args.checkpoint] if args.checkpoint else [])
    config = {"flow": flow_config.to_dict(), "prior": prior_config.to_dict(), "samples": args.samples,
              "top_k": TOP_K, "smiles": args.smiles}
    RunManifest("generate", argv, config=config, seed=args.seed, inputs=inputs, outputs=outputs).write(out)

    affinities = [s.affinity for s in ranked]
    print(f"✅ Wrote {len(ranked)} ranked sample(s) to {out}")
    print(f"   top-ranked affinity: {affinities[0]:.4f}")
    print(f"   mean top-{len(ranked)} affinity: {float(np.mean(affinities)):.4f}")
    return 0


def evaluate_command(args, argv: List[str]) -> int:
    manifest_path = Path(args.manifest)
    report = evaluate_manifest(pd.read_csv(manifest_path, dtype={"id": str}), base=manifest_path.parent,
                               threshold=args.threshold)
    out = _output_dir(args.out)
    path = out / "report.csv"
    report.to_frame().to_csv(path, index=False)
    RunManifest("evaluate", argv, config={"threshold": args.threshold}, inputs=[args.manifest],
                outputs=[str(path)]).write(out)
    print(f"✅ Evaluated {len(report.rows)} complex(es): success rate {report.success_rate:.3f}")
    if report.affinity is not None:
        metrics = report.affinity

        def shown(value):
            return "undefined" if value is None else f"{value:.4f}"

        print(f"   pearson {shown(metrics.pearson)}  spearman {shown(metrics.spearman)}  "
              f"rmse {metrics.rmse:.4f}  mae {metrics.mae:.4f}")
    return 0


def align_command(args, argv: List[str]) -> int:
    apo = _read_structure(args.apo)
    holo = _read_structure(args.holo)
    if not holo.n_ligand_atoms:
        raise HoloflowError(f"{args.holo} has no ligand HETATM records to weight the pocket")
    aligned = pocket_weighted_align(apo, holo, holo.ligand_coords())
    out = _output_dir(args.out)
    path = out / "aligned.pdb"
    path.write_text(write_pdb(aligned))
    RunManifest("align", argv, inputs=[args.apo, args.holo], outputs=[str(path)]).write(out)
    print(f"✅ Wrote pocket-aligned structure to {path}")
    return 0


def score_command(args, argv: List[str]) -> int:
    a = _read_structure(args.a).ca_coords()
    b = _read_structure(args.b).ca_coords()
    print(f"TM-score: {tm_score(a, b):.4f}")
    print(f"RMSD: {superposed_rmsd(a, b):.4f}")
    return 0


def replay_command(args, argv: List[str]) -> int:
    try:
        recorded = json.loads(Path(args.manifest).read_text())
        replayed = [str(a) for a in recorded["argv"]]
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise HoloflowError(f"unreadable run manifest {args.manifest}: {e}") from None
    if replayed and replayed[0] == "replay":
        raise HoloflowError("a run manifest cannot replay another replay")
    print(f"🔁 Replaying: holoflow {' '.join(replayed)}")
    return dispatch(replayed)


COMMANDS = {
    'parse': parse_command,
    'prior': prior_command,
    'couple': couple_command,
    'train': train_command,
    'generate': generate_command,
    'evaluate': evaluate_command,
    'align': align_command,
    'score': score_command,
    'replay': replay_command,
}


def dispatch(argv: Sequence[str]) -> int:
    """
    Run one subcommand.

    Returns:
        Exit code: 0 on success, 1 on user error (bad input, missing file,
        bad flag), 2 on internal error
    """
    argv = list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e.usage, end="", file=sys.stderr)
        print(f"❌ Error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args, argv)
    except FileNotFoundError as e:
        print(f"❌ Error: File not found: {e.filename or e}", file=sys.stderr)
        return 1
    except HoloflowError as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        print(f"❌ Internal error: {e}", file=sys.stderr)
        if args.verbose:
            import traceback
            traceback.print_exc()
        return 2


def main():
    """Main entry point for the holoflow CLI"""
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == '__main__':
    main()
