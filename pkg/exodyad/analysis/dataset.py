"""On-disk layout of recorded or simulated training sessions.

    <root>/patients.csv
    <root>/<patient>/<condition>/blocks.csv                 (optional: block, rpe_borg)
    <root>/<patient>/<condition>/block<k>/<channel>.csv

Channel files are `<user>_<side>_<joint>.csv` joint angles in radians,
`emg_<side>_<muscle>.csv`, `heart_rate.csv` and `<side>_heel_force.csv`, each in the
format read by `read_channel_csv`.
"""
import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import structlog

from exodyad.analysis.signals import TimeSeries, read_channel_csv
from exodyad.utils.exception import StructuralError
from exodyad.utils.types import ALL_JOINTS, JointId, PathType, Side, parse_enum

logger = structlog.get_logger(__name__)

PATIENTS_FILE = 'patients.csv'
BLOCKS_FILE = 'blocks.csv'
PATIENT_FIELDS = ('patient_id', 'sex', 'age', 'height_cm', 'body_weight_kg', 'paretic_side',
                  'years_since_stroke', 'ssw_speed_mps')
REQUIRED_PATIENT_FIELDS = ('patient_id', 'age', 'paretic_side')
EMG_MUSCLES = ('RF', 'BF', 'TA', 'MG')
BLOCK_DIRECTORY = re.compile(r'^block(?P<index>\d+)$')


def _optional_float(value: Optional[str]) -> Optional[float]:
    value = (value or '').strip()
    return float(value) if value else None


@dataclass(frozen=True)
class PatientInfo:
    patient_id: str
    age: float
    paretic_side: Side
    sex: str = ''
    height_cm: Optional[float] = None
    body_weight_kg: Optional[float] = None
    years_since_stroke: Optional[float] = None
    ssw_speed_mps: Optional[float] = None


def read_patients(path: PathType) -> Dict[str, PatientInfo]:
    """Reads the patient manifest; malformed rows raise StructuralError naming the row."""
    path = Path(path)
    patients = {}
    with open(path, newline='') as f:
        reader = csv.DictReader(f)
        missing = [name for name in REQUIRED_PATIENT_FIELDS if name not in (reader.fieldnames or [])]
        if missing:
            raise StructuralError(f"{path}: row 1: missing columns {', '.join(missing)}")
        for number, row in enumerate(reader, start=2):
            try:
                info = PatientInfo(patient_id=row['patient_id'].strip(), age=float(row['age']),
                                   paretic_side=parse_enum(Side, row['paretic_side'].strip().lower()),
                                   sex=(row.get('sex') or '').strip(),
                                   height_cm=_optional_float(row.get('height_cm')),
                                   body_weight_kg=_optional_float(row.get('body_weight_kg')),
                                   years_since_stroke=_optional_float(row.get('years_since_stroke')),
                                   ssw_speed_mps=_optional_float(row.get('ssw_speed_mps')))
            except (TypeError, ValueError, AttributeError) as e:
                raise StructuralError(f"{path}: row {number}: {e}") from None
            if not info.patient_id:
                raise StructuralError(f"{path}: row {number}: empty patient_id")
            if info.patient_id in patients:
                raise StructuralError(f"{path}: row {number}: duplicate patient '{info.patient_id}'")
            patients[info.patient_id] = info
    return patients


def write_patients(path: PathType, patients: List[PatientInfo]):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(PATIENT_FIELDS)
        for info in patients:
            writer.writerow([info.patient_id, info.sex, repr(info.age),
                             *('' if value is None else repr(value) for value in (info.height_cm, info.body_weight_kg)),
                             info.paretic_side.value,
                             *('' if value is None else repr(value)
                               for value in (info.years_since_stroke, info.ssw_speed_mps))])


@dataclass(frozen=True)
class BlockRecording:
    """Channel files of one training block."""

    patient_id: str
    condition: str
    block: int
    path: Path

    def _read(self, name: str) -> Optional[TimeSeries]:
        file = self.path / f"{name}.csv"
        if not file.is_file():
            return None
        try:
            return read_channel_csv(file, name)
        except ValueError as e:
            raise StructuralError(f"{file}: {e}") from None

    def joint_angles(self) -> Dict[JointId, TimeSeries]:
        channels = {}
        for joint in ALL_JOINTS:
            series = self._read(joint.label)
            if series is not None:
                channels[joint] = series
        return channels

    def emg(self) -> Dict[Tuple[Side, str], TimeSeries]:
        channels = {}
        for side in Side:
            for muscle in EMG_MUSCLES:
                series = self._read(f"emg_{side.value}_{muscle}")
                if series is not None:
                    channels[(side, muscle)] = series
        return channels

    def heart_rate(self) -> Optional[TimeSeries]:
        return self._read('heart_rate')

    def heel_force(self, side: Side) -> Optional[TimeSeries]:
        return self._read(f"{side.value}_heel_force")


class DatasetLayout:
    """Index of a dataset directory."""

    def __init__(self, root: PathType):
        self.root = Path(root)
        manifest = self.root / PATIENTS_FILE
        if not manifest.is_file():
            raise StructuralError(f"{self.root}: missing {PATIENTS_FILE}")
        self.patients = read_patients(manifest)

    @staticmethod
    def is_dataset(path: PathType) -> bool:
        return (Path(path) / PATIENTS_FILE).is_file()

    def recordings(self, patient_id: Optional[str] = None) -> List[BlockRecording]:
        """Block recordings ordered by patient, condition and block."""
        recordings = []
        for patient_dir in sorted(p for p in self.root.iterdir() if p.is_dir()):
            if patient_id is not None and patient_dir.name != patient_id:
                continue
            if patient_dir.name not in self.patients:
                raise StructuralError(f"{patient_dir}: patient not listed in {PATIENTS_FILE}")
            for condition_dir in sorted(p for p in patient_dir.iterdir() if p.is_dir()):
                for block_dir in sorted(condition_dir.iterdir()):
                    match = BLOCK_DIRECTORY.match(block_dir.name)
                    if block_dir.is_dir() and match:
                        recordings.append(BlockRecording(patient_dir.name, condition_dir.name,
                                                         int(match.group('index')), block_dir))
        recordings.sort(key=lambda r: (r.patient_id, r.condition, r.block))
        if not recordings:
            logger.warning("empty_dataset", root=str(self.root))
        return recordings

    def ratings(self, patient_id: str, condition: str) -> Dict[int, int]:
        """Borg ratings per block from the optional `blocks.csv`."""
        path = self.root / patient_id / condition / BLOCKS_FILE
        if not path.is_file():
            return {}
        ratings = {}
        with open(path, newline='') as f:
            for number, row in enumerate(csv.DictReader(f), start=2):
                try:
                    ratings[int(row['block'])] = float(row['rpe_borg'])
                except (KeyError, TypeError, ValueError) as e:
                    raise StructuralError(f"{path}: row {number}: {e}") from None
        return ratings
