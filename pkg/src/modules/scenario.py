from dataclasses import asdict, fields, is_dataclass
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, Type
from pathlib import Path
import logging
import re

import yaml

from src.models import (
    AgingConfig,
    BulkConfig,
    ClassifierConfig,
    CongestionConfig,
    CostWeights,
    CrashSpec,
    DistributionSpec,
    GeneratorSpec,
    GroupSpec,
    InvariantError,
    JobClass,
    JobSpec,
    MigrationConfig,
    NetworkEdge,
    NetworkMatrix,
    OverlayConfig,
    ParseError,
    Scenario,
    SimConfig,
    SiteSpec,
    UserSpec,
    ValidationError,
    Workload,
)


__all__ = ["parse_scenario", "parse_text", "render_scenario", "scenario_dict"]


logger = logging.getLogger(__name__)

Path_ = Tuple[Any, ...]

_TOP_LEVEL = ("name", "sites", "network", "users", "workload", "crashes", "config")
_NETWORK = ("default", "symmetric", "links")
_LINK = ("source", "destination", "bandwidth", "loss_rate")
_WORKLOAD = ("jobs", "groups", "generators")
_SECTIONS: Dict[str, Type] = {
    "weights": CostWeights,
    "classifier": ClassifierConfig,
    "bulk": BulkConfig,
    "congestion": CongestionConfig,
    "migration": MigrationConfig,
    "aging": AgingConfig,
    "overlay": OverlayConfig,
}
_FLAGS = ("normalize_costs", "transfer_delay", "message_latency")


def _dotted(path: Path_) -> str:
    return ".".join(str(part) for part in path)


def _marks(node: yaml.Node, path: Path_, out: Dict[Path_, yaml.Mark]) -> None:
    out[path] = node.start_mark
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            out[path + (key.value,)] = key.start_mark
            _marks(value, path + (key.value,), out)
    elif isinstance(node, yaml.SequenceNode):
        for index, value in enumerate(node.value):
            _marks(value, path + (index,), out)


class _Reader:
    def __init__(self, source: str, marks: Dict[Path_, yaml.Mark]) -> None:
        self.source = source
        self.marks = marks

    def where(self, path: Path_) -> str:
        for end in range(len(path), -1, -1):
            mark = self.marks.get(tuple(path[:end]))
            if mark is not None:
                return f"{self.source}:{mark.line + 1}:{mark.column + 1}"
        return self.source

    def fail(self, message: str, path: Path_, error: Type = ValidationError) -> None:
        raise error(message, field=_dotted(path) or None, location=self.where(path))

    def mapping(self, value: Any, path: Path_, known: Iterable[str]) -> Dict[str, Any]:
        if value is None:
            return {}
        if not isinstance(value, dict):
            self.fail(f"Expected a mapping. Got {type(value).__name__} instead.", path, ParseError)

        known = set(known)
        for key in value:
            if key not in known:
                logger.warning(
                    f"[yellow][WARNING][/] {self.where(path + (key,))}: unknown key "
                    f"'{_dotted(path + (key,))}' ignored"
                )
        return {key: item for key, item in value.items() if key in known}

    def sequence(self, value: Any, path: Path_) -> List[Any]:
        if value is None:
            return []
        if not isinstance(value, list):
            self.fail(f"Expected a list. Got {type(value).__name__} instead.", path, ParseError)
        return value

    def build(
        self,
        cls: Type,
        value: Any,
        path: Path_,
        convert: Optional[Dict[str, Callable[[Any, Path_], Any]]] = None,
    ) -> Any:
        """Instantiate a dataclass from a mapping, with locations on any failure."""
        names = [f.name for f in fields(cls)]
        data = self.mapping(value, path, names)

        kwargs = {}
        for key, item in data.items():
            converter = (convert or {}).get(key)
            kwargs[key] = converter(item, path + (key,)) if converter else item

        try:
            return cls(**kwargs)
        except TypeError as error:
            missing = re.findall(r"'(\w+)'", str(error))
            self.fail(
                f"{cls.__name__}: missing or malformed fields {missing}.", path
            )
        except (InvariantError, ValueError) as error:
            named = re.search(r"'(\w+)'", str(error))
            field = path + (named.group(1),) if named and named.group(1) in data else path
            self.fail(str(error), field)


def _strings(reader: _Reader) -> Callable[[Any, Path_], Tuple[str, ...]]:
    def convert(value: Any, path: Path_) -> Tuple[str, ...]:
        if isinstance(value, str):
            return (value,)
        return tuple(str(item) for item in reader.sequence(value, path))

    return convert


def _ints(reader: _Reader) -> Callable[[Any, Path_], Tuple[int, ...]]:
    def convert(value: Any, path: Path_) -> Tuple[int, ...]:
        items = [value] if isinstance(value, int) else reader.sequence(value, path)
        if not all(isinstance(item, int) and not isinstance(item, bool) for item in items):
            reader.fail(f"Expected integers. Got {items} instead.", path)
        return tuple(items)

    return convert


def _job_class(reader: _Reader) -> Callable[[Any, Path_], Optional[JobClass]]:
    def convert(value: Any, path: Path_) -> Optional[JobClass]:
        if value is None:
            return None
        try:
            return JobClass(str(value).lower())
        except ValueError:
            reader.fail(
                f"'job_class' options: {[c.value for c in JobClass]}. Got {value} instead.", path
            )

    return convert


def _distribution(reader: _Reader) -> Callable[[Any, Path_], DistributionSpec]:
    def convert(value: Any, path: Path_) -> DistributionSpec:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return DistributionSpec("constant", float(value))
        return reader.build(DistributionSpec, value, path)

    return convert


def _network(reader: _Reader, raw: Any, site_ids: List[str]) -> NetworkMatrix:
    path = ("network",)
    data = reader.mapping(raw, path, _NETWORK)
    edges: NetworkMatrix = {}

    default = data.get("default")
    if default is not None:
        spec = reader.mapping(default, path + ("default",), ("bandwidth", "loss_rate"))
        for source in site_ids:
            for destination in site_ids:
                if source != destination:
                    edges[(source, destination)] = reader.build(
                        NetworkEdge,
                        {"source": source, "destination": destination, **spec},
                        path + ("default",),
                    )

    symmetric = bool(data.get("symmetric", False))
    for index, link in enumerate(reader.sequence(data.get("links"), path + ("links",))):
        where = path + ("links", index)
        edge = reader.build(NetworkEdge, reader.mapping(link, where, _LINK), where)
        for end in (edge.source, edge.destination):
            if end not in site_ids:
                reader.fail(f"Link endpoint {end} is not a declared site.", where)
        if edge.source == edge.destination:
            reader.fail(f"Link {edge.source}->{edge.destination} is a self loop.", where)
        edges[(edge.source, edge.destination)] = edge
        if symmetric:
            edges[(edge.destination, edge.source)] = NetworkEdge(
                edge.destination, edge.source, edge.bandwidth, edge.loss_rate
            )

    for source in site_ids:
        for destination in site_ids:
            if source != destination and (source, destination) not in edges:
                reader.fail(f"Missing network edge {source}->{destination}.", path)
    return edges


def _config(reader: _Reader, raw: Any) -> SimConfig:
    path = ("config",)
    data = reader.mapping(raw, path, list(_SECTIONS) + list(_FLAGS))
    kwargs = {
        key: reader.build(cls, data[key], path + (key,))
        for key, cls in _SECTIONS.items()
        if key in data
    }
    kwargs.update({key: data[key] for key in _FLAGS if key in data})
    return reader.build(SimConfig, kwargs, path) if kwargs else SimConfig()


def _unique(reader: _Reader, items: List[Any], path: Path_, key: str = "id") -> None:
    seen = set()
    for index, item in enumerate(items):
        value = getattr(item, key)
        if value in seen:
            reader.fail(f"Duplicate {key} {value}.", path + (index, key))
        seen.add(value)


def _check_references(reader: _Reader, scenario: Scenario) -> None:
    """Cross field rules the dataclasses cannot see on their own."""
    sites = {site.id: site for site in scenario.sites}
    users = {user.id for user in scenario.users}
    datasets = {name for site in scenario.sites for name in site.datasets}
    largest = max(site.cpu_count - site.reserved for site in scenario.sites)

    def check_job(spec: Any, path: Path_, owners: Iterable[str], origins: Iterable[str],
                  processors: Iterable[int], names: Iterable[Optional[str]]) -> None:
        for owner in owners:
            if owner not in users:
                reader.fail(f"Unknown user {owner}.", path)
        for site in origins:
            if site not in sites:
                reader.fail(f"Unknown site {site}.", path)
        for count in processors:
            if count > largest:
                reader.fail(
                    f"Jobs need {count} processors but the largest site offers {largest}.", path
                )
        for name in names:
            if name is not None and name not in datasets:
                reader.fail(f"Dataset {name} is hosted by no site.", path)
        data = spec.input_size + spec.output_size + spec.executable_size
        if spec.job_class is None and data == 0 and _idle(spec):
            reader.fail("Jobs with no service time and no data cannot be classified.", path)

    workload = scenario.workload
    for index, spec in enumerate(workload.jobs):
        check_job(spec, ("workload", "jobs", index), [spec.owner], [spec.site],
                  [spec.processors], [spec.dataset])
    for index, spec in enumerate(workload.groups):
        path = ("workload", "groups", index)
        check_job(spec, path, [spec.owner], [spec.site], [spec.processors], [spec.dataset])
        if spec.destination is not None and spec.destination not in sites:
            reader.fail(f"Unknown destination {spec.destination}.", path + ("destination",))
    for index, spec in enumerate(workload.generators):
        check_job(spec, ("workload", "generators", index), spec.owners, spec.sites,
                  spec.processors, spec.datasets)

    ids = [spec.id for spec in workload.jobs] + [spec.id for spec in workload.groups]
    ids += [spec.name for spec in workload.generators]
    duplicated = sorted({name for name in ids if ids.count(name) > 1})
    if duplicated:
        reader.fail(f"Workload ids must be unique. Got {duplicated} twice.", ("workload",))

    for index, crash in enumerate(scenario.crashes):
        site_id, _, number = crash.node.rpartition("/")
        if site_id not in sites or not number.isdigit() or int(number) >= sites[site_id].nodes:
            reader.fail(
                f"Crash names node {crash.node}; nodes are '<site>/<k>' with k < the site's nodes.",
                ("crashes", index, "node"),
            )


def _idle(spec: Any) -> bool:
    if isinstance(spec, GeneratorSpec):
        return spec.service.kind == "constant" and spec.service.value == 0
    return spec.service_time == 0


def parse_text(text: str, source: str = "<string>", name: Optional[str] = None) -> Scenario:
    """
    Parse and validate a scenario from YAML text.

    Args:
        text (str): The YAML document.
        source (str, optional): Shown in error locations. Defaults to "<string>".
        name (str, optional): Fallback scenario name. Defaults to the source stem.

    Returns:
        Scenario: The validated scenario.

    Raises:
        ParseError: If the YAML is malformed or a section has the wrong shape.
        ValidationError: If a value breaks a rule. Both name the field and its location.
    """
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as error:
        mark = error.problem_mark or error.context_mark
        location = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark else source
        raise ParseError(f"Malformed YAML: {error.problem}", location=location) from None
    except yaml.YAMLError as error:
        raise ParseError(f"Malformed YAML: {error}", location=source) from None

    marks: Dict[Path_, yaml.Mark] = {}
    if root is not None:
        _marks(root, (), marks)
    reader = _Reader(source, marks)

    data = reader.mapping(raw, (), _TOP_LEVEL)
    strings, ints, job_class = _strings(reader), _ints(reader), _job_class(reader)

    site_list = reader.sequence(data.get("sites"), ("sites",))
    if not site_list:
        reader.fail("A scenario needs at least one site.", ("sites",))
    sites = [
        reader.build(SiteSpec, item, ("sites", i), {"datasets": strings})
        for i, item in enumerate(site_list)
    ]
    _unique(reader, sites, ("sites",))

    user_list = reader.sequence(data.get("users"), ("users",))
    if not user_list:
        reader.fail("A scenario needs at least one user.", ("users",))
    users = [reader.build(UserSpec, item, ("users", i)) for i, item in enumerate(user_list)]
    _unique(reader, users, ("users",))

    edges = _network(reader, data.get("network"), [site.id for site in sites])

    workload_raw = reader.mapping(data.get("workload"), ("workload",), _WORKLOAD)
    trace_convert = {"job_class": job_class}
    workload = Workload(
        jobs=tuple(
            reader.build(JobSpec, item, ("workload", "jobs", i), trace_convert)
            for i, item in enumerate(reader.sequence(workload_raw.get("jobs"), ("workload", "jobs")))
        ),
        groups=tuple(
            reader.build(GroupSpec, item, ("workload", "groups", i), trace_convert)
            for i, item in enumerate(
                reader.sequence(workload_raw.get("groups"), ("workload", "groups"))
            )
        ),
        generators=tuple(
            reader.build(
                GeneratorSpec,
                item,
                ("workload", "generators", i),
                {
                    "owners": strings,
                    "sites": strings,
                    "processors": ints,
                    "datasets": strings,
                    "service": _distribution(reader),
                    "job_class": job_class,
                },
            )
            for i, item in enumerate(
                reader.sequence(workload_raw.get("generators"), ("workload", "generators"))
            )
        ),
    )

    crashes = tuple(
        reader.build(CrashSpec, item, ("crashes", i))
        for i, item in enumerate(reader.sequence(data.get("crashes"), ("crashes",)))
    )

    scenario = Scenario(
        name=str(data.get("name") or name or Path(source).stem),
        sites=tuple(sites),
        edges=edges,
        users=tuple(users),
        workload=workload,
        crashes=crashes,
        config=_config(reader, data.get("config")),
        source=source,
    )
    _check_references(reader, scenario)
    return scenario


def parse_scenario(path: str) -> Scenario:
    """
    Read and validate a scenario file.

    Args:
        path (str): Path of a YAML scenario.

    Returns:
        Scenario: The validated scenario.
    """
    file = Path(path)
    if not file.is_file():
        raise ParseError(f"Scenario file not found. Got {path} instead.", location=str(path))
    return parse_text(file.read_text(encoding="utf-8"), source=str(path), name=file.stem)


def _plain(value: Any) -> Any:
    if isinstance(value, JobClass):
        return value.value
    if is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in fields(value)}
    if isinstance(value, (tuple, list)):
        return [_plain(item) for item in value]
    return value


def scenario_dict(scenario: Scenario) -> Dict[str, Any]:
    """The scenario as plain YAML-ready data, network written out link by link."""
    return {
        "name": scenario.name,
        "sites": [_plain(site) for site in scenario.sites],
        "network": {
            "links": [
                asdict(edge) for _, edge in sorted(scenario.edges.items(), key=lambda item: item[0])
            ]
        },
        "users": [_plain(user) for user in scenario.users],
        "workload": _plain(scenario.workload),
        "crashes": [_plain(crash) for crash in scenario.crashes],
        "config": _plain(scenario.config),
    }


def render_scenario(scenario: Scenario) -> str:
    """YAML text that parses back to an equal scenario."""
    return yaml.safe_dump(scenario_dict(scenario), sort_keys=False, default_flow_style=None)
