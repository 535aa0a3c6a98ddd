"""FHIR R5 export: five resources per series, batched into transaction bundles.

Each indexed series yields a Patient, an ImagingStudy, one BodyStructure
aggregating all coded structures, a Device describing the software versions
involved, and a Provenance tying the annotations to that device. Patient and
Device are emitted as conditional creates so repeated exports stay free of
duplicates; logical ids are content-derived hashes, so re-exporting the same
input is idempotent byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .annotate import AnnotationSet
from .errors import CtIndexError
from .ingest import SeriesDescriptor, SeriesMismatch
from .termmap import SNOMED_SYSTEM

DICOM_MODALITY_SYSTEM = "http://dicom.nema.org/resources/ontology/DCM"

RESOURCE_TYPES = ("Patient", "ImagingStudy", "BodyStructure", "Device", "Provenance")


class EmptyAnnotationSet(CtIndexError):
    code = "empty_annotation_set"


class InvalidCounts(CtIndexError):
    code = "invalid_counts"


@dataclass(frozen=True)
class ExportProfile:
    """Canonical URLs and identifier systems used in the generated resources."""

    base_url: str = "https://ctindex.example.org/fhir"
    profile_base: str = "https://ctindex.example.org/fhir/StructureDefinition"
    patient_identifier_system: str = "https://ctindex.example.org/identifiers/patient-pseudonym"
    study_identifier_system: str = "https://ctindex.example.org/identifiers/study-uid"
    device_identifier_system: str = "https://ctindex.example.org/identifiers/device-identity"

    def profile_url(self, resource_type: str) -> str:
        return f"{self.profile_base}/indexed-{resource_type.lower()}"


DEFAULT_PROFILE = ExportProfile()


@dataclass(frozen=True)
class DeviceIdentity:
    """The software stack that produced an annotation set."""

    indexer_name: str
    indexer_version: str
    segmenter_name: str
    segmenter_version: str
    mapping_version: str

    def identity_key(self) -> str:
        material = "|".join(
            (
                self.indexer_name,
                self.indexer_version,
                self.segmenter_name,
                self.segmenter_version,
                self.mapping_version,
            )
        )
        return hashlib.sha256(material.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ResourceSet:
    """The five resources for one series, cross-referenced by logical id."""

    patient: dict
    imaging_study: dict
    body_structure: dict
    device: dict
    provenance: dict

    def resources(self) -> tuple[dict, ...]:
        return (
            self.patient,
            self.imaging_study,
            self.body_structure,
            self.device,
            self.provenance,
        )


def _hex_id(natural_key: str) -> str:
    # 32 lowercase hex chars: valid FHIR id, stable across exports.
    return hashlib.sha256(natural_key.encode("utf-8")).hexdigest()[:32]


def build_resources(
    ann: AnnotationSet,
    series: SeriesDescriptor,
    device: DeviceIdentity,
    profile: ExportProfile = DEFAULT_PROFILE,
) -> ResourceSet:
    """Transform one annotated series into its five-resource representation."""
    if not ann.annotations:
        raise EmptyAnnotationSet(f"series {ann.series_uid} has no annotations to export")
    if ann.series_uid != series.series_uid:
        raise SeriesMismatch(
            f"annotation set is for {ann.series_uid!r}, descriptor is {series.series_uid!r}"
        )

    patient_id = _hex_id(series.patient_pseudonym)
    study_id = _hex_id(series.series_uid)
    body_structure_id = _hex_id(series.series_uid + "bs")
    device_id = _hex_id(device.identity_key())
    provenance_id = _hex_id(series.series_uid + "prov")

    patient = {
        "resourceType": "Patient",
        "id": patient_id,
        "meta": {"profile": [profile.profile_url("Patient")]},
        "identifier": [
            {
                "system": profile.patient_identifier_system,
                "value": series.patient_pseudonym,
            }
        ],
    }
    imaging_study = {
        "resourceType": "ImagingStudy",
        "id": study_id,
        "meta": {"profile": [profile.profile_url("ImagingStudy")]},
        "identifier": [
            {"system": profile.study_identifier_system, "value": series.study_uid}
        ],
        "status": "available",
        "subject": {"reference": f"Patient/{patient_id}"},
        "started": series.acquisition_date.isoformat(),
        "numberOfSeries": 1,
        "series": [
            {
                "uid": series.series_uid,
                "modality": {
                    "coding": [
                        {"system": DICOM_MODALITY_SYSTEM, "code": series.modality}
                    ]
                },
            }
        ],
    }
    body_structure = {
        "resourceType": "BodyStructure",
        "id": body_structure_id,
        "meta": {"profile": [profile.profile_url("BodyStructure")]},
        "patient": {"reference": f"Patient/{patient_id}"},
        "includedStructure": [
            {
                "structure": {
                    "coding": [
                        {
                            "system": SNOMED_SYSTEM,
                            "code": a.snomed_code,
                            "display": a.snomed_display,
                        }
                    ]
                }
            }
            for a in ann.annotations
        ],
    }
    device_resource = {
        "resourceType": "Device",
        "id": device_id,
        "meta": {"profile": [profile.profile_url("Device")]},
        "identifier": [
            {
                "system": profile.device_identifier_system,
                "value": device.identity_key(),
            }
        ],
        "status": "active",
        "name": [{"value": device.indexer_name, "type": "registered-name"}],
        "version": [
            {"type": {"text": "indexer"}, "value": device.indexer_version},
            {
                "type": {"text": f"segmenter:{device.segmenter_name}"},
                "value": device.segmenter_version,
            },
            {"type": {"text": "mapping"}, "value": device.mapping_version},
        ],
    }
    provenance = {
        "resourceType": "Provenance",
        "id": provenance_id,
        "meta": {"profile": [profile.profile_url("Provenance")]},
        "target": [{"reference": f"BodyStructure/{body_structure_id}"}],
        "recorded": ann.created_at.isoformat(),
        "agent": [{"who": {"reference": f"Device/{device_id}"}}],
    }
    return ResourceSet(
        patient=patient,
        imaging_study=imaging_study,
        body_structure=body_structure,
        device=device_resource,
        provenance=provenance,
    )


def _conditional_entry(resource: dict, profile: ExportProfile) -> dict:
    identifier = resource["identifier"][0]
    criteria = f"identifier={identifier['system']}|{identifier['value']}"
    return {
        "fullUrl": f"{profile.base_url}/{resource['resourceType']}/{resource['id']}",
        "resource": resource,
        "request": {
            "method": "POST",
            "url": resource["resourceType"],
            "ifNoneExist": criteria,
        },
    }


def _create_entry(resource: dict, profile: ExportProfile) -> dict:
    return {
        "fullUrl": f"{profile.base_url}/{resource['resourceType']}/{resource['id']}",
        "resource": resource,
        "request": {"method": "POST", "url": resource["resourceType"]},
    }


def to_transaction_bundle(
    sets: list[ResourceSet], profile: ExportProfile = DEFAULT_PROFILE
) -> dict:
    """Batch resource sets into one transaction bundle.

    Patients and Devices repeated across series are emitted once, as
    conditional creates keyed on their business identifier. Entry order is
    all Patients, all Devices, then one (ImagingStudy, BodyStructure,
    Provenance) triple per series in input order.
    """
    if not sets:
        raise EmptyAnnotationSet("cannot build a bundle from zero resource sets")
    patients: dict[str, dict] = {}
    devices: dict[str, dict] = {}
    for rs in sets:
        patients.setdefault(rs.patient["id"], rs.patient)
        devices.setdefault(rs.device["id"], rs.device)

    entries = [_conditional_entry(p, profile) for p in patients.values()]
    entries += [_conditional_entry(d, profile) for d in devices.values()]
    for rs in sets:
        entries.append(_create_entry(rs.imaging_study, profile))
        entries.append(_create_entry(rs.body_structure, profile))
        entries.append(_create_entry(rs.provenance, profile))
    return {"resourceType": "Bundle", "type": "transaction", "entry": entries}


def unique_resource_count(
    series_count: int, patient_count: int, device_identity_count: int
) -> int:
    """Distinct resources after conditional-create deduplication.

    Study, body structure and provenance are per-series; patients and device
    identities are shared: ``3*S + P + D``.
    """
    if min(series_count, patient_count, device_identity_count) < 0:
        raise InvalidCounts("counts must be non-negative")
    if patient_count > series_count:
        raise InvalidCounts("cannot have more patients than series")
    return 3 * series_count + patient_count + device_identity_count


def serialize_bundle(bundle: dict) -> bytes:
    """Canonical bundle bytes: sorted keys, two-space indent, trailing newline."""
    return (json.dumps(bundle, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode(
        "utf-8"
    )


def parse_bundle(raw: bytes) -> dict:
    return json.loads(raw.decode("utf-8"))


def serialize_resource(resource: dict) -> bytes:
    """Canonical single-resource bytes (newline-delimited bulk export form)."""
    return (json.dumps(resource, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")
