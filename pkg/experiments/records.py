"""Run directories (``record.json`` + ``model.sqt``) and database persistence."""
import json
import logging
from pathlib import Path

from django.db import transaction

from snn.model import save

from .models import EpochMetric, RunRecord
from .serializers import EpochMetricSerializer, RunRecordSerializer
from .training import RunResult

logger = logging.getLogger(__name__)

RECORD_FILE = 'record.json'
CHECKPOINT_FILE = 'model.sqt'


def _validated(result):
    serializer = RunRecordSerializer(data=result.record)
    serializer.is_valid(raise_exception=True)
    metrics = EpochMetricSerializer(data=result.metrics, many=True)
    metrics.is_valid(raise_exception=True)
    return serializer.validated_data, metrics.validated_data


def write_run(result, out_root):
    """Write the checkpoint and ``record.json`` of one run under ``out_root/<run_id>``."""
    directory = Path(out_root) / result.record['run_id']
    directory.mkdir(parents=True, exist_ok=True)
    if result.checkpoint is not None:
        result.record['checkpoint_path'] = str(save(result.checkpoint, directory / CHECKPOINT_FILE))
    record, metrics = _validated(result)
    payload = {
        'record': RunRecordSerializer(RunRecord(**record)).data,
        'epoch_metrics': EpochMetricSerializer(metrics, many=True).data,
    }
    path = directory / RECORD_FILE
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    logger.info(f"Run record written to {path}")
    return directory


@transaction.atomic
def persist(result):
    """Store a run and its epoch metrics; re-running a ``run_id`` replaces it."""
    record, metrics = _validated(result)
    run_id = record.pop('run_id')
    instance, created = RunRecord.objects.update_or_create(run_id=run_id, defaults=record)
    if not created:
        instance.epoch_metrics.all().delete()
    EpochMetric.objects.bulk_create([EpochMetric(run=instance, **metric) for metric in metrics])
    logger.debug(f"Persisted {run_id} with {len(metrics)} epoch metrics")
    return instance


def read_run_dir(directory):
    payload = json.loads((Path(directory) / RECORD_FILE).read_text())
    return RunResult(payload['record'], payload['epoch_metrics'])


def load_results(in_dir):
    """Every run found below ``in_dir``, in path order."""
    paths = sorted(Path(in_dir).rglob(RECORD_FILE))
    return [read_run_dir(path.parent) for path in paths]


def stored_results(group=None):
    queryset = RunRecord.objects.prefetch_related('epoch_metrics')
    if group is not None:
        queryset = queryset.filter(group=group)
    return [
        RunResult(
            dict(RunRecordSerializer(record).data),
            [dict(metric) for metric in EpochMetricSerializer(record.epoch_metrics.all(), many=True).data],
        )
        for record in queryset
    ]
